#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mcsurv/data.hpp"

namespace mcsurv {

/// One atomic test on a feature column. For categorical columns `values`
/// holds label codes; for numeric columns the raw values. Intervals are
/// closed: lo <= x <= hi.
struct Condition {
  enum class Kind { Equals, InSet, Interval };

  std::string feature;
  Kind kind = Kind::Equals;
  std::vector<double> values;
  double lo = 0.0;
  double hi = 0.0;

  bool matches(double x) const;
  friend bool operator==(const Condition&, const Condition&) = default;
};

enum class SubgroupKind { Manual, Auto, FullPopulation };

std::string to_string(SubgroupKind kind);
SubgroupKind parse_subgroup_kind(const std::string& text);

/// A named conjunction of conditions. An empty conjunction matches everyone.
struct SubgroupSpec {
  std::string name;
  SubgroupKind kind = SubgroupKind::Manual;
  std::vector<Condition> conditions;

  friend bool operator==(const SubgroupSpec&, const SubgroupSpec&) = default;
};

SubgroupSpec full_population();

/// Throws UnknownFeature for conditions naming a missing column.
std::vector<bool> membership(const SubgroupSpec& spec, const DiscreteDataset& dataset);
/// Indices of the matching records, ascending.
std::vector<std::size_t> members(const SubgroupSpec& spec, const DiscreteDataset& dataset);

struct AutoSelectOptions {
  std::size_t min_size = 100;
  /// Largest allowed |candidate & accepted| / |candidate|.
  double max_overlap = 0.8;
  std::size_t max_arity = 3;
};

/// Greedy selection over every cross-product of up to max_arity categorical
/// columns. Candidates are pooled across arities and visited by decreasing
/// size (ties: arity, then feature names, then codes); a candidate is kept
/// when it is large enough and overlaps no earlier pick too much.
/// Throws NoCategoricalFeatures.
std::vector<SubgroupSpec> auto_select(const DiscreteDataset& dataset, const AutoSelectOptions& options = {});

enum class DistanceKind { L2, VarianceAdjusted };

std::string to_string(DistanceKind kind);
/// Accepts "l2", "var" and "variance_adjusted".
DistanceKind parse_distance_kind(const std::string& text);

/// Calibration constraint dist(marginal_i, KM_i) <= c.
struct ConstraintSpec {
  SubgroupSpec subgroup;
  double c = 0.0;
  DistanceKind distance = DistanceKind::L2;
};

/// Full population first, then `manual`, then `automatic`. Names must be
/// unique (DuplicateName); `overrides` maps subgroup names to their own c.
std::vector<ConstraintSpec> build_constraint_set(const std::vector<SubgroupSpec>& manual,
                                                 const std::vector<SubgroupSpec>& automatic, double c_default,
                                                 DistanceKind distance,
                                                 const std::map<std::string, double>& overrides = {});

/// Subgroup definitions file. One subgroup per line:
///
///   <kind> <name> [feature=label] [feature=l1|l2] [feature=[lo,hi]] [@c=value]
///
/// where kind is manual, auto or full. Blank lines and '#' comments are
/// ignored. Categorical values are written as labels, numeric ones as
/// numbers. `@c=` sets a per-subgroup slack.
struct SubgroupFile {
  std::vector<SubgroupSpec> subgroups;
  std::map<std::string, double> c_overrides;
};

SubgroupFile read_subgroups(std::istream& in, const std::vector<FeatureInfo>& features);
SubgroupFile read_subgroups(const std::filesystem::path& path, const std::vector<FeatureInfo>& features);
void write_subgroups(std::ostream& out, const SubgroupFile& file, const std::vector<FeatureInfo>& features);
void write_subgroups(const std::filesystem::path& path, const SubgroupFile& file,
                     const std::vector<FeatureInfo>& features);

}  // namespace mcsurv
