#include "mcsurv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mcsurv/error.hpp"
#include "text_util.hpp"

namespace mcsurv {

using detail::format_double;
using detail::parse_double;
using detail::split_line;

std::string to_string(Discretization strategy) {
  return strategy == Discretization::Uniform ? "uniform" : "quantile";
}

Discretization parse_discretization(const std::string& text) {
  if (text == "uniform") return Discretization::Uniform;
  if (text == "quantile") return Discretization::Quantile;
  throw Error(ErrorCode::InvalidArgument, "unknown discretization strategy '" + text + "'");
}

std::size_t DiscreteDataset::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownFeature, "no feature named '" + name + "'");
}

std::vector<Observation> DiscreteDataset::observations() const {
  std::vector<Observation> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.time, r.event});
  return out;
}

std::vector<Observation> DiscreteDataset::observations(std::span<const std::size_t> indices) const {
  std::vector<Observation> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back({records.at(i).time, records.at(i).event});
  return out;
}

DiscreteDataset DiscreteDataset::subset(std::span<const std::size_t> indices) const {
  DiscreteDataset out;
  out.tau = tau;
  out.features = features;
  out.strategy = strategy;
  out.seed = seed;
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(records.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::size_t require_column(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not in header");
  return static_cast<std::size_t>(it - header.begin());
}

bool is_categorical(const TableSchema& schema, const std::string& name) {
  return std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(), name) !=
         schema.categorical_columns.end();
}

}  // namespace

RawDataset parse_table(std::istream& in, const TableSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyDataset, "missing header row");
  const auto header = split_line(line, schema.delimiter);

  const auto time_col = require_column(header, schema.time_column);
  const auto event_col = require_column(header, schema.event_column);
  for (const auto& name : schema.categorical_columns) {
    if (std::find(schema.feature_columns.begin(), schema.feature_columns.end(), name) ==
        schema.feature_columns.end()) {
      throw Error(ErrorCode::MissingColumn,
                  "categorical column '" + name + "' is not among the feature columns");
    }
  }
  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.feature_columns) feature_cols.push_back(require_column(header, name));

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto fields = split_line(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::NonNumericValue, "row " + std::to_string(rows.size() + 1) + " has " +
                                                  std::to_string(fields.size()) + " fields, expected " +
                                                  std::to_string(header.size()));
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "no data rows");

  RawDataset out;
  // Label codes follow sorted label order so that coding does not depend on
  // row order.
  std::vector<std::map<std::string, int>> codes(feature_cols.size());
  for (std::size_t f = 0; f < feature_cols.size(); ++f) {
    FeatureInfo info{schema.feature_columns[f], is_categorical(schema, schema.feature_columns[f]), {}};
    if (info.categorical) {
      std::set<std::string> labels;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& v = rows[r][feature_cols[f]];
        if (v.empty()) {
          throw Error(ErrorCode::NonNumericValue,
                      "row " + std::to_string(r + 1) + ", column '" + info.name + "' is empty");
        }
        labels.insert(v);
      }
      info.labels.assign(labels.begin(), labels.end());
      for (std::size_t c = 0; c < info.labels.size(); ++c) codes[f][info.labels[c]] = static_cast<int>(c);
    }
    out.features.push_back(std::move(info));
  }

  out.records.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    const auto row_label = std::to_string(r + 1);
    RawRecord rec;
    auto t = parse_double(fields[time_col]);
    if (!t || !std::isfinite(*t)) {
      throw Error(ErrorCode::NonNumericValue, "row " + row_label + ", column '" + schema.time_column + "'");
    }
    rec.time = *t;
    auto e = parse_double(fields[event_col]);
    if (!e) throw Error(ErrorCode::NonNumericValue, "row " + row_label + ", column '" + schema.event_column + "'");
    if (*e != 0.0 && *e != 1.0) {
      throw Error(ErrorCode::InvalidEventFlag, "row " + row_label + " has event value '" + fields[event_col] + "'");
    }
    rec.event = *e == 1.0;
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const auto& v = fields[feature_cols[f]];
      if (out.features[f].categorical) {
        rec.features.push_back(codes[f].at(v));
      } else {
        auto x = parse_double(v);
        if (!x || !std::isfinite(*x)) {
          throw Error(ErrorCode::NonNumericValue, "row " + row_label + ", column '" + out.features[f].name + "'");
        }
        rec.features.push_back(*x);
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

RawDataset parse_table(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_table(in, schema);
}

// ---------------------------------------------------------------------------
// Discretization

DiscreteDataset discretize(const RawDataset& raw, int tau, Discretization strategy) {
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "tau must be >= 1");
  if (raw.records.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to discretize");
  for (const auto& r : raw.records) {
    if (!(r.time >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative or NaN time");
  }

  std::vector<double> times;
  times.reserve(raw.records.size());
  for (const auto& r : raw.records) times.push_back(r.time);
  const double max_time = *std::max_element(times.begin(), times.end());

  std::function<int(double)> bin_of;
  std::vector<double> edges;
  if (strategy == Discretization::Uniform) {
    bin_of = [tau, max_time](double t) {
      if (max_time <= 0.0) return 1;
      // t * tau / max keeps integer grids exact (t=2, max=10, tau=5 -> 1).
      const double scaled = t * static_cast<double>(tau) / max_time;
      return std::clamp(static_cast<int>(std::ceil(scaled)), 1, tau);
    };
  } else {
    auto sorted = times;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
      throw Error(ErrorCode::DegenerateTimes, "all observed times are equal");
    }
    const auto n = sorted.size();
    for (int k = 1; k < tau; ++k) {
      // Type-1 empirical quantile at k/tau.
      const auto pos = static_cast<std::size_t>(
          std::ceil(static_cast<double>(k) * static_cast<double>(n) / static_cast<double>(tau)));
      edges.push_back(sorted[std::max<std::size_t>(pos, 1) - 1]);
    }
    bin_of = [&edges](double t) {
      // Bin = 1 + number of edges strictly below t.
      return 1 + static_cast<int>(std::lower_bound(edges.begin(), edges.end(), t) - edges.begin());
    };
  }

  DiscreteDataset out;
  out.tau = tau;
  out.features = raw.features;
  out.strategy = strategy;
  out.records.reserve(raw.records.size());
  for (const auto& r : raw.records) out.records.push_back({r.features, bin_of(r.time), r.event});
  return out;
}

// ---------------------------------------------------------------------------
// Splits

void SplitSpec::validate() const {
  if (train < 0.0 || validation < 0.0 || test < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must be non-negative");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1");
  }
}

Splits split(const DiscreteDataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const auto n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.validation));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test));
  const auto n_train = n - n_val - n_test;

  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(idx.begin(), idx.end());
    auto part = dataset.subset(idx);
    part.seed = spec.seed;
    return part;
  };
  return {take(0, n_train), take(n_train, n_val), take(n_train + n_val, n_test)};
}

// ---------------------------------------------------------------------------
// Counterexample tables

CounterexampleTable parse_counterexample_table(const std::string& id) {
  if (id == "dcal") return CounterexampleTable::DCal;
  if (id == "brier") return CounterexampleTable::Brier;
  if (id == "rps") return CounterexampleTable::Rps;
  throw Error(ErrorCode::UnknownTableId, "unknown counterexample table '" + id + "'");
}

std::string to_string(CounterexampleTable table) {
  switch (table) {
    case CounterexampleTable::DCal: return "dcal";
    case CounterexampleTable::Brier: return "brier";
    case CounterexampleTable::Rps: return "rps";
  }
  return "unknown";
}

DiscreteDataset counterexample_dataset(CounterexampleTable table) {
  DiscreteDataset out;
  out.tau = 5;
  out.features = {FeatureInfo{"x", false, {}}};
  auto add = [&out](int time, bool event) {
    const auto id = static_cast<double>(out.records.size() + 1);
    out.records.push_back({{id}, time, event});
  };
  for (int t = 1; t <= 5; ++t) add(t, true);
  switch (table) {
    case CounterexampleTable::DCal:
      break;
    case CounterexampleTable::Brier:
      for (int rep = 0; rep < 2; ++rep) {
        for (int t = 1; t <= 5; ++t) add(t, false);
      }
      break;
    case CounterexampleTable::Rps:
      for (int t : {1, 1, 1, 1, 2, 2, 2, 3, 3, 3}) add(t, false);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

std::size_t SyntheticConfig::n() const {
  std::size_t total = 0;
  for (const auto& g : groups) total += g.count;
  return total;
}

DiscreteDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed, SyntheticDraws* draws) {
  if (config.tau < 1) throw Error(ErrorCode::InvalidArgument, "tau must be >= 1");
  if (config.d < 1) throw Error(ErrorCode::InvalidArgument, "d must be >= 1");
  if (config.groups.empty()) throw Error(ErrorCode::InvalidArgument, "at least one group is required");
  for (const auto& g : config.groups) {
    if (!(g.hazard > 0.0 && g.hazard < 1.0)) {
      throw Error(ErrorCode::InvalidRate, "group '" + g.label + "' hazard must lie in (0,1)");
    }
  }
  if (!(config.censoring_rate >= 0.0 && config.censoring_rate < 1.0)) {
    throw Error(ErrorCode::InvalidRate, "censoring rate must lie in [0,1)");
  }
  if (config.n() == 0) throw Error(ErrorCode::EmptyDataset, "all group counts are zero");

  DiscreteDataset out;
  out.tau = config.tau;
  out.seed = seed;
  FeatureInfo group_info{"group", true, {}};
  for (const auto& g : config.groups) group_info.labels.push_back(g.label);
  out.features.push_back(group_info);
  for (std::size_t k = 1; k < config.d; ++k) out.features.push_back({"z" + std::to_string(k), false, {}});

  std::vector<std::size_t> membership;
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    membership.insert(membership.end(), config.groups[g].count, g);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(membership.begin(), membership.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution censored(config.censoring_rate);
  std::uniform_int_distribution<int> censor_time(1, config.tau);

  if (draws) {
    draws->event_time.clear();
    draws->censor_time.clear();
  }
  out.records.reserve(membership.size());
  for (auto g : membership) {
    SurvivalRecord rec;
    rec.features.push_back(static_cast<double>(g));
    for (std::size_t k = 1; k < config.d; ++k) rec.features.push_back(noise(rng));

    // Failures before the first success, so the event lands on step count+1.
    // Follow-up ends at tau; anything later is unobserved.
    std::geometric_distribution<int> geometric(config.groups[g].hazard);
    const int event = geometric(rng) + 1;
    const int censor = censored(rng) ? censor_time(rng) : config.tau;

    if (event <= censor) {
      rec.time = event;
      rec.event = true;
    } else {
      rec.time = censor;
      rec.event = false;
    }
    if (draws) {
      draws->event_time.push_back(event);
      draws->censor_time.push_back(censor);
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model inputs

std::size_t model_input_dim(std::span<const FeatureInfo> features) {
  std::size_t dim = 0;
  for (const auto& f : features) dim += f.categorical ? f.labels.size() : 1;
  return dim;
}

Matrix design_matrix(const DiscreteDataset& dataset) {
  const auto dim = model_input_dim(dataset.features);
  Matrix x(dataset.size(), dim);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto& feats = dataset.records[r].features;
    std::size_t col = 0;
    for (std::size_t f = 0; f < dataset.features.size(); ++f) {
      const auto& info = dataset.features[f];
      if (info.categorical) {
        const auto code = static_cast<std::size_t>(feats[f]);
        if (code < info.labels.size()) x(r, col + code) = 1.0;
        col += info.labels.size();
      } else {
        x(r, col++) = feats[f];
      }
    }
  }
  return x;
}

FeatureScaling fit_standardization(const DiscreteDataset& dataset) {
  const auto d = dataset.features.size();
  FeatureScaling s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  if (dataset.empty()) return s;
  const auto n = static_cast<double>(dataset.size());
  for (std::size_t f = 0; f < d; ++f) {
    if (dataset.features[f].categorical) continue;
    double mean = 0.0;
    for (const auto& r : dataset.records) mean += r.features[f];
    mean /= n;
    double var = 0.0;
    for (const auto& r : dataset.records) var += (r.features[f] - mean) * (r.features[f] - mean);
    var /= n;
    s.mean[f] = mean;
    s.scale[f] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

void apply_standardization(DiscreteDataset& dataset, const FeatureScaling& scaling) {
  for (auto& r : dataset.records) {
    for (std::size_t f = 0; f < dataset.features.size(); ++f) {
      if (dataset.features[f].categorical) continue;
      r.features[f] = (r.features[f] - scaling.mean[f]) / scaling.scale[f];
    }
  }
}

// ---------------------------------------------------------------------------
// Canonical files

void write_dataset(const DiscreteDataset& dataset, const std::filesystem::path& table_path,
                   const std::filesystem::path& metadata_path) {
  std::ofstream table(table_path, std::ios::binary);
  if (!table) throw Error(ErrorCode::Io, "cannot write " + table_path.string());
  table << "time,event";
  for (const auto& f : dataset.features) table << ',' << f.name;
  table << '\n';
  for (const auto& r : dataset.records) {
    table << r.time << ',' << (r.event ? 1 : 0);
    for (std::size_t f = 0; f < dataset.features.size(); ++f) {
      table << ',';
      if (dataset.features[f].categorical) {
        table << dataset.features[f].labels.at(static_cast<std::size_t>(r.features[f]));
      } else {
        table << format_double(r.features[f]);
      }
    }
    table << '\n';
  }

  nlohmann::ordered_json meta;
  meta["format"] = "mcsurv-dataset";
  meta["version"] = 1;
  meta["tau"] = dataset.tau;
  meta["strategy"] = to_string(dataset.strategy);
  meta["seed"] = dataset.seed;
  meta["records"] = dataset.size();
  meta["feature_names"] = nlohmann::json::array();
  meta["categorical_maps"] = nlohmann::ordered_json::object();
  for (const auto& f : dataset.features) {
    meta["feature_names"].push_back(f.name);
    if (f.categorical) meta["categorical_maps"][f.name] = f.labels;
  }
  std::ofstream m(metadata_path, std::ios::binary);
  if (!m) throw Error(ErrorCode::Io, "cannot write " + metadata_path.string());
  m << meta.dump(2) << '\n';
}

DiscreteDataset read_dataset(const std::filesystem::path& table_path, const std::filesystem::path& metadata_path) {
  std::ifstream m(metadata_path);
  if (!m) throw Error(ErrorCode::Io, "cannot open " + metadata_path.string());
  nlohmann::json meta;
  try {
    m >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptArtifact, metadata_path.string() + ": " + e.what());
  }

  DiscreteDataset out;
  try {
    out.tau = meta.at("tau").get<int>();
    out.strategy = parse_discretization(meta.at("strategy").get<std::string>());
    out.seed = meta.at("seed").get<std::uint64_t>();
    const auto& maps = meta.at("categorical_maps");
    for (const auto& name : meta.at("feature_names")) {
      FeatureInfo info{name.get<std::string>(), false, {}};
      if (maps.contains(info.name)) {
        info.categorical = true;
        info.labels = maps.at(info.name).get<std::vector<std::string>>();
      }
      out.features.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptArtifact, metadata_path.string() + ": " + e.what());
  }

  std::ifstream table(table_path);
  if (!table) throw Error(ErrorCode::Io, "cannot open " + table_path.string());
  std::string line;
  if (!std::getline(table, line)) throw Error(ErrorCode::CorruptArtifact, "missing header");
  const auto header = split_line(line, ',');
  if (header.size() != out.features.size() + 2) {
    throw Error(ErrorCode::CorruptArtifact, table_path.string() + ": header does not match metadata");
  }

  std::vector<std::map<std::string, int>> codes(out.features.size());
  for (std::size_t f = 0; f < out.features.size(); ++f) {
    for (std::size_t c = 0; c < out.features[f].labels.size(); ++c) {
      codes[f][out.features[f].labels[c]] = static_cast<int>(c);
    }
  }

  std::size_t row = 0;
  while (std::getline(table, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = split_line(line, ',');
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::CorruptArtifact, "row " + std::to_string(row) + " has wrong field count");
    }
    SurvivalRecord rec;
    auto t = detail::parse_int(fields[0]);
    auto e = detail::parse_int(fields[1]);
    if (!t || *t < 1 || *t > out.tau || !e || (*e != 0 && *e != 1)) {
      throw Error(ErrorCode::CorruptArtifact, "row " + std::to_string(row) + " has invalid time/event");
    }
    rec.time = static_cast<int>(*t);
    rec.event = *e == 1;
    for (std::size_t f = 0; f < out.features.size(); ++f) {
      const auto& v = fields[f + 2];
      if (out.features[f].categorical) {
        auto it = codes[f].find(v);
        if (it == codes[f].end()) {
          throw Error(ErrorCode::CorruptArtifact, "row " + std::to_string(row) + ": unknown label '" + v + "'");
        }
        rec.features.push_back(it->second);
      } else {
        auto x = parse_double(v);
        if (!x) throw Error(ErrorCode::CorruptArtifact, "row " + std::to_string(row) + ": non-numeric feature");
        rec.features.push_back(*x);
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mcsurv
