#include "mcsurv/subgroups.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "mcsurv/error.hpp"
#include "text_util.hpp"

namespace mcsurv {

bool Condition::matches(double x) const {
  switch (kind) {
    case Kind::Equals:
      return !values.empty() && x == values.front();
    case Kind::InSet:
      return std::find(values.begin(), values.end(), x) != values.end();
    case Kind::Interval:
      return lo <= x && x <= hi;
  }
  return false;
}

std::string to_string(SubgroupKind kind) {
  switch (kind) {
    case SubgroupKind::Manual:
      return "manual";
    case SubgroupKind::Auto:
      return "auto";
    case SubgroupKind::FullPopulation:
      return "full";
  }
  return "manual";
}

SubgroupKind parse_subgroup_kind(const std::string& text) {
  if (text == "manual") return SubgroupKind::Manual;
  if (text == "auto") return SubgroupKind::Auto;
  if (text == "full" || text == "full_population") return SubgroupKind::FullPopulation;
  throw Error(ErrorCode::InvalidArgument, "unknown subgroup kind '" + text + "'");
}

SubgroupSpec full_population() { return {"all", SubgroupKind::FullPopulation, {}}; }

std::vector<bool> membership(const SubgroupSpec& spec, const DiscreteDataset& dataset) {
  std::vector<std::size_t> columns;
  columns.reserve(spec.conditions.size());
  for (const auto& cond : spec.conditions) columns.push_back(dataset.feature_index(cond.feature));

  std::vector<bool> mask(dataset.size(), true);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& x = dataset.records[i].features;
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (!spec.conditions[k].matches(x[columns[k]])) {
        mask[i] = false;
        break;
      }
    }
  }
  return mask;
}

std::vector<std::size_t> members(const SubgroupSpec& spec, const DiscreteDataset& dataset) {
  const auto mask = membership(spec, dataset);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Automatic selection

namespace {

struct Candidate {
  std::vector<std::size_t> columns;  // ascending feature indices
  std::vector<int> codes;
  std::vector<std::size_t> rows;     // ascending
  std::vector<std::string> names;    // feature names, same order as columns
};

// Calls fn(combination) for each k-subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  if (k == 0 || k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    fn(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::size_t intersection_size(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

}  // namespace

std::vector<SubgroupSpec> auto_select(const DiscreteDataset& dataset, const AutoSelectOptions& options) {
  if (options.min_size < 1) throw Error(ErrorCode::InvalidArgument, "min_size must be >= 1");
  if (!(options.max_overlap > 0.0 && options.max_overlap <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "max_overlap must lie in (0, 1]");
  }
  std::vector<std::size_t> categorical;
  for (std::size_t j = 0; j < dataset.features.size(); ++j) {
    if (dataset.features[j].categorical) categorical.push_back(j);
  }
  if (categorical.empty()) throw Error(ErrorCode::NoCategoricalFeatures, "no categorical column to enumerate");

  std::vector<Candidate> pool;
  const std::size_t max_arity = std::min(options.max_arity, categorical.size());
  for (std::size_t arity = 1; arity <= max_arity; ++arity) {
    for_each_combination(categorical.size(), arity, [&](const std::vector<std::size_t>& pick) {
      std::vector<std::size_t> columns;
      for (auto p : pick) columns.push_back(categorical[p]);
      std::map<std::vector<int>, std::vector<std::size_t>> cells;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::vector<int> key;
        key.reserve(columns.size());
        for (auto c : columns) key.push_back(static_cast<int>(dataset.records[i].features[c]));
        cells[key].push_back(i);
      }
      for (auto& [codes, rows] : cells) {
        if (rows.size() < options.min_size) continue;
        Candidate cand{columns, codes, std::move(rows), {}};
        for (auto c : columns) cand.names.push_back(dataset.features[c].name);
        pool.push_back(std::move(cand));
      }
    });
  }

  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.rows.size() != b.rows.size()) return a.rows.size() > b.rows.size();
    return std::forward_as_tuple(a.columns.size(), a.names, a.codes) <
           std::forward_as_tuple(b.columns.size(), b.names, b.codes);
  });

  std::vector<const Candidate*> accepted;
  for (const auto& cand : pool) {
    const double size = static_cast<double>(cand.rows.size());
    const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](const Candidate* prev) {
      return static_cast<double>(intersection_size(cand.rows, prev->rows)) / size <= options.max_overlap;
    });
    if (clear) accepted.push_back(&cand);
  }

  std::vector<SubgroupSpec> out;
  out.reserve(accepted.size());
  for (const auto* cand : accepted) {
    SubgroupSpec spec;
    spec.kind = SubgroupKind::Auto;
    std::vector<std::string> parts;
    for (std::size_t k = 0; k < cand->columns.size(); ++k) {
      const auto& info = dataset.features[cand->columns[k]];
      const auto code = static_cast<std::size_t>(cand->codes[k]);
      const std::string label = code < info.labels.size() ? info.labels[code] : std::to_string(code);
      parts.push_back(info.name + "=" + label);
      spec.conditions.push_back({info.name, Condition::Kind::Equals, {static_cast<double>(code)}, 0.0, 0.0});
    }
    spec.name = detail::join(parts, "&");
    out.push_back(std::move(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constraint sets

std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::L2 ? "l2" : "variance_adjusted";
}

DistanceKind parse_distance_kind(const std::string& text) {
  if (text == "l2") return DistanceKind::L2;
  if (text == "var" || text == "variance_adjusted") return DistanceKind::VarianceAdjusted;
  throw Error(ErrorCode::InvalidArgument, "unknown distance '" + text + "' (expected l2 or var)");
}

std::vector<ConstraintSpec> build_constraint_set(const std::vector<SubgroupSpec>& manual,
                                                 const std::vector<SubgroupSpec>& automatic, double c_default,
                                                 DistanceKind distance,
                                                 const std::map<std::string, double>& overrides) {
  std::vector<ConstraintSpec> out;
  std::set<std::string> names;
  auto add = [&](const SubgroupSpec& spec) {
    if (!names.insert(spec.name).second) {
      throw Error(ErrorCode::DuplicateName, "subgroup '" + spec.name + "' defined twice");
    }
    const auto it = overrides.find(spec.name);
    const double c = it == overrides.end() ? c_default : it->second;
    if (!(c >= 0.0)) throw Error(ErrorCode::InvalidArgument, "slack for '" + spec.name + "' must be >= 0");
    out.push_back({spec, c, distance});
  };
  add(full_population());
  for (const auto& s : manual) add(s);
  for (const auto& s : automatic) add(s);
  return out;
}

// ---------------------------------------------------------------------------
// Definitions file

namespace {

[[noreturn]] void bad_line(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::CorruptArtifact, "subgroup file line " + std::to_string(line_no) + ": " + why);
}

double parse_value(const FeatureInfo& info, const std::string& text, std::size_t line_no) {
  if (info.categorical) {
    const auto it = std::find(info.labels.begin(), info.labels.end(), text);
    if (it == info.labels.end()) bad_line(line_no, "unknown label '" + text + "' for " + info.name);
    return static_cast<double>(it - info.labels.begin());
  }
  const auto v = detail::parse_double(text);
  if (!v) bad_line(line_no, "non-numeric value '" + text + "' for " + info.name);
  return *v;
}

const FeatureInfo& find_feature(const std::vector<FeatureInfo>& features, const std::string& name) {
  for (const auto& f : features) {
    if (f.name == name) return f;
  }
  throw Error(ErrorCode::UnknownFeature, "no feature named '" + name + "'");
}

std::string format_value(const FeatureInfo& info, double v) {
  if (info.categorical) {
    const auto code = static_cast<std::size_t>(v);
    if (code < info.labels.size()) return info.labels[code];
  }
  return detail::format_double(v);
}

}  // namespace

SubgroupFile read_subgroups(std::istream& in, const std::vector<FeatureInfo>& features) {
  SubgroupFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string kind_text;
    if (!(tokens >> kind_text)) continue;

    SubgroupSpec spec;
    try {
      spec.kind = parse_subgroup_kind(kind_text);
    } catch (const Error&) {
      bad_line(line_no, "unknown subgroup kind '" + kind_text + "'");
    }
    if (!(tokens >> spec.name)) bad_line(line_no, "missing subgroup name");

    std::string token;
    while (tokens >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos || eq == 0) bad_line(line_no, "expected feature=value, got '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "@c") {
        const auto c = detail::parse_double(value);
        if (!c || *c < 0.0) bad_line(line_no, "bad slack '" + value + "'");
        file.c_overrides[spec.name] = *c;
        continue;
      }
      const auto& info = find_feature(features, key);
      Condition cond;
      cond.feature = key;
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
        const auto comma = value.find(',');
        if (comma == std::string::npos) bad_line(line_no, "interval needs lo,hi");
        const auto lo = detail::parse_double(value.substr(1, comma - 1));
        const auto hi = detail::parse_double(value.substr(comma + 1, value.size() - comma - 2));
        if (!lo || !hi || *lo > *hi) bad_line(line_no, "bad interval '" + value + "'");
        cond.kind = Condition::Kind::Interval;
        cond.lo = *lo;
        cond.hi = *hi;
      } else if (value.find('|') != std::string::npos) {
        cond.kind = Condition::Kind::InSet;
        std::string part;
        std::istringstream parts(value);
        while (std::getline(parts, part, '|')) cond.values.push_back(parse_value(info, part, line_no));
      } else {
        cond.kind = Condition::Kind::Equals;
        cond.values.push_back(parse_value(info, value, line_no));
      }
      spec.conditions.push_back(std::move(cond));
    }
    file.subgroups.push_back(std::move(spec));
  }
  return file;
}

SubgroupFile read_subgroups(const std::filesystem::path& path, const std::vector<FeatureInfo>& features) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return read_subgroups(in, features);
}

void write_subgroups(std::ostream& out, const SubgroupFile& file, const std::vector<FeatureInfo>& features) {
  for (const auto& spec : file.subgroups) {
    out << to_string(spec.kind) << ' ' << spec.name;
    for (const auto& cond : spec.conditions) {
      const auto& info = find_feature(features, cond.feature);
      out << ' ' << cond.feature << '=';
      switch (cond.kind) {
        case Condition::Kind::Equals:
          out << format_value(info, cond.values.at(0));
          break;
        case Condition::Kind::InSet:
          for (std::size_t k = 0; k < cond.values.size(); ++k) {
            out << (k ? "|" : "") << format_value(info, cond.values[k]);
          }
          break;
        case Condition::Kind::Interval:
          out << '[' << detail::format_double(cond.lo) << ',' << detail::format_double(cond.hi) << ']';
          break;
      }
    }
    if (const auto it = file.c_overrides.find(spec.name); it != file.c_overrides.end()) {
      out << " @c=" << detail::format_double(it->second);
    }
    out << '\n';
  }
}

void write_subgroups(const std::filesystem::path& path, const SubgroupFile& file,
                     const std::vector<FeatureInfo>& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_subgroups(out, file, features);
}

}  // namespace mcsurv
