#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mcsurv/data.hpp"
#include "mcsurv/estimators.hpp"
#include "mcsurv/hazard_model.hpp"
#include "mcsurv/matrix.hpp"
#include "mcsurv/subgroups.hpp"

namespace mcsurv {

struct CIndexOptions {
  /// Award 1/2 for pairs whose F values tie (the default counts them as 0).
  bool half_credit_ties = false;
};

/// Concordance over ordered pairs (i, j) with event_i and t_i < t_j: the
/// pair counts when F(t_i|x_i) > F(t_i|x_j), F = 1 - S. `survival` is
/// rows x (tau + 1). Throws NoComparablePairs.
double c_index(const Matrix& survival, std::span<const Observation> records, const CIndexOptions& options = {});
double c_index(const HazardModel& model, const DiscreteDataset& dataset, const CIndexOptions& options = {});

/// Harmonic mean of c and 1 - ece; 0 when both are 0.
double total_score(double c_index, double ece);

struct EvaluationConfig {
  int bins = 10;
  double significance = 0.05;
  CIndexOptions c_index;
  std::string dataset_id;
  std::string model_id;
};

struct SubgroupRow {
  std::string name;
  std::size_t size = 0;
  bool population = false;
  bool skipped = false;
  /// Semicolon-separated notes on degenerate values ("" when clean).
  std::string flags;

  bool logrank_passed = false;
  double logrank_statistic = 0.0;
  double ece = 0.0;
  double c_index = 0.0;
  double total_score = 0.0;
  double l2_distance = 0.0;
  double variance_adjusted_distance = 0.0;

  SurvivalCurve km;
  SurvivalCurve marginal;
};

struct EvaluationReport {
  std::vector<SubgroupRow> rows;
  std::string dataset_id;
  std::string model_id;
  int bins = 10;
  double significance = 0.05;
};

/// One row per subgroup (population first, exactly once) with the test KM
/// curve, the model's marginal curve, one-sample logrank, ECE, C-index on
/// members, total score and both distances. Empty subgroups give skipped
/// rows; undefined values are reported as NaN and named in `flags`.
EvaluationReport evaluate(const HazardModel& model, const DiscreteDataset& test,
                          const std::vector<SubgroupSpec>& subgroups, const EvaluationConfig& config = {});

void write_report_csv(const EvaluationReport& report, std::ostream& out);
void write_report_table(const EvaluationReport& report, std::ostream& out);
/// One file per evaluated row: t, model marginal, KM, KM variance.
void write_report_curves(const EvaluationReport& report, const std::filesystem::path& directory);

/// Two-sided paired t-test over aligned per-seed scores.
struct PairedTest {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
};

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace mcsurv
