#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcsurv/matrix.hpp"

namespace mcsurv {

/// Column description shared by raw and discretized datasets. For a
/// categorical column, `labels[code]` is the original text of integer code
/// `code`; numeric columns leave `labels` empty.
struct FeatureInfo {
  std::string name;
  bool categorical = false;
  std::vector<std::string> labels;

  friend bool operator==(const FeatureInfo&, const FeatureInfo&) = default;
};

struct RawRecord {
  std::vector<double> features;
  double time = 0.0;
  bool event = false;
};

struct RawDataset {
  std::vector<FeatureInfo> features;
  std::vector<RawRecord> records;
};

/// One individual on the discrete grid: time in {1, ..., tau}, event is true
/// when the event was observed (not censored).
struct SurvivalRecord {
  std::vector<double> features;
  int time = 1;
  bool event = false;

  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// (time, event) pair; the only part of a record the nonparametric
/// estimators look at.
struct Observation {
  int time = 1;
  bool event = false;
};

enum class Discretization { Uniform, Quantile };

std::string to_string(Discretization strategy);
Discretization parse_discretization(const std::string& text);

struct DiscreteDataset {
  std::vector<SurvivalRecord> records;
  int tau = 1;
  std::vector<FeatureInfo> features;
  Discretization strategy = Discretization::Uniform;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  /// Index of the named column; throws UnknownFeature.
  std::size_t feature_index(const std::string& name) const;

  std::vector<Observation> observations() const;
  std::vector<Observation> observations(std::span<const std::size_t> indices) const;

  /// Copy of the dataset restricted to `indices`, in the given order.
  DiscreteDataset subset(std::span<const std::size_t> indices) const;
};

struct TableSchema {
  std::string time_column;
  std::string event_column;
  std::vector<std::string> feature_columns;
  std::vector<std::string> categorical_columns;
  char delimiter = ',';
};

RawDataset parse_table(std::istream& in, const TableSchema& schema);
RawDataset parse_table(const std::filesystem::path& path, const TableSchema& schema);

/// Maps continuous times onto bins 1..tau. Uniform uses tau equal-width bins
/// over [0, max time]; quantile uses the empirical k/tau quantiles of the
/// observed times as upper bin edges. Time 0 lands in bin 1.
DiscreteDataset discretize(const RawDataset& raw, int tau, Discretization strategy);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Splits {
  DiscreteDataset train;
  DiscreteDataset validation;
  DiscreteDataset test;
};

/// Validation and test get floor(n * fraction) records, train gets the rest.
/// Each part keeps the original record order.
Splits split(const DiscreteDataset& dataset, const SplitSpec& spec);

enum class CounterexampleTable { DCal, Brier, Rps };

CounterexampleTable parse_counterexample_table(const std::string& id);
std::string to_string(CounterexampleTable table);

/// The three hand-built synthetic tables used to show how D-Cal, Brier and
/// RPS can report perfect calibration for a badly miscalibrated population
/// curve. Each record carries a single numeric placeholder feature (its
/// 1-based row number).
DiscreteDataset counterexample_dataset(CounterexampleTable table);

struct SyntheticGroup {
  std::string label;
  std::size_t count = 0;
  double hazard = 0.1;
};

/// Column 0 of the generated data is the categorical group label; columns
/// 1..d-1 are standard normal noise covariates.
struct SyntheticConfig {
  std::size_t d = 1;
  std::vector<SyntheticGroup> groups;
  /// Probability that an individual has a (uniform on 1..tau) censoring time.
  double censoring_rate = 0.0;
  int tau = 10;

  std::size_t n() const;
};

/// Raw draws behind each generated record, exposed for auditing.
struct SyntheticDraws {
  /// Untruncated geometric draw; may exceed tau.
  std::vector<int> event_time;
  /// End of follow-up: the random censoring draw, or tau when none was drawn.
  std::vector<int> censor_time;
};

DiscreteDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed,
                                   SyntheticDraws* draws = nullptr);

/// Number of model inputs after one-hot expanding categorical columns.
std::size_t model_input_dim(std::span<const FeatureInfo> features);

/// Model inputs: numeric columns copied, categorical columns one-hot encoded
/// over the full label table.
Matrix design_matrix(const DiscreteDataset& dataset);

/// Per-column affine standardization fitted on numeric columns only.
struct FeatureScaling {
  std::vector<double> mean;
  std::vector<double> scale;
};

FeatureScaling fit_standardization(const DiscreteDataset& dataset);
void apply_standardization(DiscreteDataset& dataset, const FeatureScaling& scaling);

// Canonical on-disk form: a delimited table (time, event, features...) plus
// a JSON sidecar with tau, strategy, feature names, categorical maps and seed.
void write_dataset(const DiscreteDataset& dataset, const std::filesystem::path& table_path,
                   const std::filesystem::path& metadata_path);
DiscreteDataset read_dataset(const std::filesystem::path& table_path,
                             const std::filesystem::path& metadata_path);

}  // namespace mcsurv
