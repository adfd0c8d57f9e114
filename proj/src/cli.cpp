#include "mcsurv/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <sstream>

#include "mcsurv/calibration.hpp"
#include "mcsurv/error.hpp"
#include "mcsurv/hazard_model.hpp"
#include "mcsurv/losses.hpp"
#include "mcsurv/metrics.hpp"
#include "mcsurv/subgroups.hpp"
#include "mcsurv/trainer.hpp"
#include "text_util.hpp"

namespace mcsurv::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Hashing and manifests

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 initialisation failed");
  }
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

namespace {

class RunRecorder {
 public:
  RunRecorder(std::string command, std::vector<std::string> args)
      : command_(std::move(command)), args_(std::move(args)), start_(std::chrono::steady_clock::now()) {}

  json& config() { return config_; }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& path) { inputs_.push_back(path); }
  void artifact(const fs::path& relative) { artifacts_.push_back(relative); }

  void write(const fs::path& out_dir) const {
    json m;
    m["command"] = command_;
    m["arguments"] = args_;
    m["config"] = config_;
    m["seed"] = seed_;
    m["inputs"] = json::array();
    for (const auto& p : inputs_) {
      m["inputs"].push_back({{"path", fs::absolute(p).lexically_normal().string()}, {"sha256", sha256_file(p)}});
    }
    m["artifacts"] = json::array();
    for (const auto& p : artifacts_) {
      m["artifacts"].push_back({{"path", p.generic_string()}, {"sha256", sha256_file(out_dir / p)}});
    }
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["wall_clock_seconds"] = elapsed;
    m["version"] = MCSURV_VERSION;
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write manifest in " + out_dir.string());
    out << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  json config_ = json::object();
  std::uint64_t seed_ = 0;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> artifacts_;
  std::chrono::steady_clock::time_point start_;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptArtifact, path.string() + ": " + e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

}  // namespace

ManifestCheck verify_manifest(const fs::path& run_dir) {
  ManifestCheck check;
  const auto manifest = read_json(run_dir / "manifest.json");
  auto verify = [&](const fs::path& path, const std::string& expected) {
    if (!fs::exists(path)) {
      check.ok = false;
      check.problems.push_back("missing " + path.string());
    } else if (sha256_file(path) != expected) {
      check.ok = false;
      check.problems.push_back("hash mismatch for " + path.string());
    }
  };
  for (const auto& a : manifest.at("artifacts")) {
    verify(run_dir / a.at("path").get<std::string>(), a.at("sha256").get<std::string>());
  }
  for (const auto& i : manifest.at("inputs")) verify(i.at("path").get<std::string>(), i.at("sha256").get<std::string>());
  return check;
}

// ---------------------------------------------------------------------------
// Counterexamples

Matrix counterexample_predictions(CounterexampleTable table) {
  const auto data = counterexample_dataset(table);
  const auto tau = static_cast<std::size_t>(data.tau);
  Matrix s(data.size(), tau + 1, 1.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    const auto ti = static_cast<std::size_t>(r.time);
    switch (table) {
      case CounterexampleTable::DCal: {
        const double target = 0.15 + 0.2 * static_cast<double>(r.time - 1);
        for (std::size_t t = 0; t <= tau; ++t) {
          s(i, t) = t <= ti ? 1.0 - (1.0 - target) * static_cast<double>(t) / static_cast<double>(ti) : target;
        }
        break;
      }
      case CounterexampleTable::Brier:
        for (std::size_t t = ti; t <= tau; ++t) s(i, t) = 0.0;
        break;
      case CounterexampleTable::Rps:
        if (r.event) {
          for (std::size_t t = ti; t <= tau; ++t) s(i, t) = 0.0;
        }
        break;
    }
  }
  return s;
}

CounterexampleResult run_counterexample(CounterexampleTable table, int dcal_bins) {
  CounterexampleResult res;
  res.table = table;
  res.dataset = counterexample_dataset(table);
  res.predictions = counterexample_predictions(table);
  const auto obs = res.dataset.observations();
  std::vector<std::size_t> everyone(res.dataset.size());
  for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = i;
  res.marginal = marginal_survival(res.predictions, everyone);
  res.km = km_curve(obs, res.dataset.tau);

  switch (table) {
    case CounterexampleTable::DCal:
      res.metric = "D-Cal";
      res.value = dcal_metric(res.predictions, obs, {dcal_bins, 1e-6, true});
      break;
    case CounterexampleTable::Brier: {
      res.metric = "Brier";
      const auto g = censoring_km(obs, res.dataset.tau);
      for (int t = 1; t <= res.dataset.tau; ++t) {
        res.per_time.push_back(brier_score(res.predictions, obs, t, g).value);
        res.value = std::max(res.value, res.per_time.back());
      }
      break;
    }
    case CounterexampleTable::Rps:
      res.metric = "RPS";
      res.value = rps_score(res.predictions, obs);
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

using detail::format_double;

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto v = detail::parse_double(part);
    if (!v) throw Error(ErrorCode::InvalidArgument, "bad number '" + part + "' in '" + text + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto t = detail::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

SplitSpec parse_split(const std::string& text, std::uint64_t seed) {
  const auto f = parse_fractions(text);
  if (f.size() != 3) throw Error(ErrorCode::InvalidArgument, "--split expects train,validation,test");
  SplitSpec spec{f[0], f[1], f[2], seed};
  spec.validate();
  return spec;
}

const char* const kSplitNames[] = {"train", "validation", "test"};

void write_splits(const Splits& splits, const fs::path& out_dir, RunRecorder& rec) {
  const DiscreteDataset* parts[] = {&splits.train, &splits.validation, &splits.test};
  for (int k = 0; k < 3; ++k) {
    const std::string name = kSplitNames[k];
    write_dataset(*parts[k], out_dir / (name + ".csv"), out_dir / (name + ".json"));
    rec.artifact(name + ".csv");
    rec.artifact(name + ".json");
  }
}

DiscreteDataset load_split(const fs::path& data_dir, const std::string& name, RunRecorder& rec) {
  const auto table = data_dir / (name + ".csv");
  const auto meta = data_dir / (name + ".json");
  auto ds = read_dataset(table, meta);
  rec.input(table);
  rec.input(meta);
  return ds;
}

// -- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string time_column = "time";
  std::string event_column = "event";
  std::string features;
  std::string categorical;
  std::string delimiter = ",";
  int tau = 102;
  std::string strategy = "uniform";
  std::string split = "0.6,0.2,0.2";
  std::uint64_t seed = 0;
  bool standardize = false;
  std::string out;
};

int cmd_ingest(const IngestArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RunRecorder rec("ingest", argv);
  if (a.delimiter.size() != 1) throw Error(ErrorCode::InvalidArgument, "--delimiter must be one character");
  TableSchema schema;
  schema.time_column = a.time_column;
  schema.event_column = a.event_column;
  schema.delimiter = a.delimiter[0];
  schema.categorical_columns = parse_list(a.categorical);
  schema.feature_columns = parse_list(a.features);
  if (schema.feature_columns.empty()) {
    // Default: every column except time and event, in file order.
    std::ifstream in(a.input);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + a.input);
    std::string header;
    std::getline(in, header);
    for (const auto& col : detail::split_line(header, schema.delimiter)) {
      const std::string name(detail::trim(col));
      if (name != schema.time_column && name != schema.event_column) schema.feature_columns.push_back(name);
    }
  }
  const auto raw = parse_table(fs::path(a.input), schema);
  auto data = discretize(raw, a.tau, parse_discretization(a.strategy));
  data.seed = a.seed;
  auto splits = split(data, parse_split(a.split, a.seed));
  if (a.standardize) {
    // Fitted on train only so validation and test stay unseen.
    const auto scaling = fit_standardization(splits.train);
    for (auto* part : {&splits.train, &splits.validation, &splits.test}) apply_standardization(*part, scaling);
  }

  fs::create_directories(a.out);
  write_splits(splits, a.out, rec);
  rec.input(a.input);
  rec.seed(a.seed);
  rec.config() = {{"tau", a.tau},
                  {"strategy", a.strategy},
                  {"split", a.split},
                  {"standardize", a.standardize},
                  {"time_column", a.time_column},
                  {"event_column", a.event_column},
                  {"features", schema.feature_columns},
                  {"categorical", schema.categorical_columns}};
  rec.write(a.out);
  out << "ingested " << data.size() << " records (tau=" << a.tau << "): train " << splits.train.size()
      << ", validation " << splits.validation.size() << ", test " << splits.test.size() << " -> " << a.out << '\n';
  return 0;
}

// -- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string groups = "major:900:0.05,minor:100:0.4";
  std::size_t noise = 2;
  double censoring = 0.2;
  int tau = 20;
  std::string split = "0.6,0.2,0.2";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RunRecorder rec("generate", argv);
  SyntheticConfig cfg;
  cfg.d = a.noise + 1;
  cfg.censoring_rate = a.censoring;
  cfg.tau = a.tau;
  for (const auto& item : parse_list(a.groups)) {
    const auto first = item.find(':');
    const auto second = item.find(':', first == std::string::npos ? first : first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "group '" + item + "' must be label:count:hazard");
    }
    const auto count = detail::parse_int(item.substr(first + 1, second - first - 1));
    const auto hazard = detail::parse_double(item.substr(second + 1));
    if (!count || *count < 1 || !hazard) throw Error(ErrorCode::InvalidArgument, "bad group '" + item + "'");
    cfg.groups.push_back({item.substr(0, first), static_cast<std::size_t>(*count), *hazard});
  }
  const auto data = generate_synthetic(cfg, a.seed);
  const auto splits = split(data, parse_split(a.split, a.seed));
  fs::create_directories(a.out);
  write_splits(splits, a.out, rec);
  rec.seed(a.seed);
  rec.config() = {{"groups", a.groups}, {"noise", a.noise}, {"censoring", a.censoring},
                  {"tau", a.tau},       {"split", a.split}};
  rec.write(a.out);
  out << "generated " << data.size() << " records (tau=" << a.tau << "): train " << splits.train.size()
      << ", validation " << splits.validation.size() << ", test " << splits.test.size() << " -> " << a.out << '\n';
  return 0;
}

// -- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string mode = "graduate";
  std::string arch = "mlp_time";
  std::size_t hidden = 50;
  double epsilon = 1e-6;
  std::string distance = "l2";
  double c = 0.02;
  std::string subgroups;
  bool auto_subgroups = false;
  std::size_t min_size = 100;
  double max_overlap = 0.8;
  std::size_t max_arity = 3;
  double rps_weight = 1.0;
  TrainerConfig trainer;
  std::string out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  RunRecorder rec("train", argv);
  const fs::path data_dir(a.data);
  const auto train = load_split(data_dir, "train", rec);
  const auto validation = load_split(data_dir, "validation", rec);

  const bool graduate = a.mode == "graduate";
  if (!graduate && a.mode != "drsa" && a.mode != "rps") {
    throw Error(ErrorCode::InvalidArgument, "--mode must be graduate, drsa or rps");
  }
  if (!graduate && (!a.subgroups.empty() || a.auto_subgroups)) {
    err << "warning: constraint flags are ignored in " << a.mode << " mode\n";
  }

  ModelShape shape;
  shape.architecture = parse_architecture(a.arch);
  shape.input_dim = model_input_dim(train.features);
  shape.tau = train.tau;
  shape.hidden = a.hidden;
  shape.epsilon = a.epsilon;
  const auto init = init_model(shape, a.trainer.seed);

  TrainerConfig cfg = a.trainer;
  cfg.rps_weight = a.rps_weight;

  fs::create_directories(a.out);
  TrainResult result{init, 0, {init, {}, {}}, false};
  std::vector<ConstraintSpec> constraints;
  if (graduate) {
    SubgroupFile file;
    if (!a.subgroups.empty()) {
      file = read_subgroups(fs::path(a.subgroups), train.features);
      rec.input(a.subgroups);
    }
    std::vector<SubgroupSpec> manual;
    for (auto& s : file.subgroups) {
      if (s.kind != SubgroupKind::FullPopulation) manual.push_back(s);
    }
    std::vector<SubgroupSpec> automatic;
    if (a.auto_subgroups) automatic = auto_select(train, {a.min_size, a.max_overlap, a.max_arity});
    constraints = build_constraint_set(manual, automatic, a.c, parse_distance_kind(a.distance), file.c_overrides);

    SubgroupFile used;
    for (const auto& cs : constraints) {
      used.subgroups.push_back(cs.subgroup);
      used.c_overrides[cs.subgroup.name] = cs.c;
    }
    {
      auto f = open_out(fs::path(a.out) / "subgroups.txt");
      write_subgroups(f, used, train.features);
    }
    rec.artifact("subgroups.txt");
    result = primal_dual_train(init, train, validation, constraints, cfg);
  } else {
    result = baseline_train(init, train, validation, a.mode == "drsa" ? BaselineMode::Drsa : BaselineMode::DrsaRps,
                            cfg);
  }

  save_model(result.selected, (fs::path(a.out) / "model.txt").string());
  rec.artifact("model.txt");
  {
    auto f = open_out(fs::path(a.out) / "history.csv");
    write_history(result.state.history, f);
  }
  rec.artifact("history.csv");
  if (graduate) {
    std::vector<std::string> names;
    for (const auto& cs : constraints) names.push_back(cs.subgroup.name);
    auto f = open_out(fs::path(a.out) / "mu_trajectory.csv");
    write_mu_trajectory(mu_trajectory_probe(result.state.history), names, f);
    rec.artifact("mu_trajectory.csv");
  }

  const auto& chosen = result.state.history.at(static_cast<std::size_t>(result.selected_iteration - 1));
  json summary = {{"mode", a.mode},
                  {"selected_iteration", result.selected_iteration},
                  {"iterations_run", result.state.history.size()},
                  {"early_stopped", result.early_stopped},
                  {"validation_satisfied", chosen.satisfied},
                  {"validation_c_index", format_double(chosen.c_index)},
                  {"constraints", constraints.size()}};
  {
    auto f = open_out(fs::path(a.out) / "summary.json");
    f << summary.dump(2) << '\n';
  }
  rec.artifact("summary.json");

  rec.seed(cfg.seed);
  rec.config() = {{"mode", a.mode},
                  {"arch", a.arch},
                  {"hidden", a.hidden},
                  {"epsilon", a.epsilon},
                  {"distance", a.distance},
                  {"c", a.c},
                  {"auto_subgroups", a.auto_subgroups},
                  {"min_size", a.min_size},
                  {"max_overlap", a.max_overlap},
                  {"max_arity", a.max_arity},
                  {"eta", cfg.eta},
                  {"outer_iters", cfg.outer_iterations},
                  {"patience", cfg.patience},
                  {"inner_steps", cfg.inner_steps},
                  {"inner_lr", cfg.inner_lr},
                  {"batch_size", cfg.batch_size},
                  {"momentum", cfg.momentum},
                  {"mu_init_max", cfg.mu_init_max},
                  {"rps_weight", cfg.rps_weight}};
  rec.write(a.out);
  out << a.mode << ": selected iteration " << result.selected_iteration << " of " << result.state.history.size()
      << " (validation constraints satisfied " << chosen.satisfied << "/" << constraints.size()
      << ", C-index " << format_double(chosen.c_index) << ") -> " << a.out << '\n';
  return 0;
}

// -- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string subgroups;
  int bins = 10;
  double significance = 0.05;
  bool half_credit = false;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RunRecorder rec("evaluate", argv);
  const auto model = load_model(a.model);
  rec.input(a.model);
  const auto data = load_split(a.data, a.split, rec);
  std::vector<SubgroupSpec> subgroups;
  if (!a.subgroups.empty()) {
    subgroups = read_subgroups(fs::path(a.subgroups), data.features).subgroups;
    rec.input(a.subgroups);
  }

  // Runs are paired across systems by the seed that trained the model.
  std::uint64_t seed = 0;
  const auto model_manifest = fs::path(a.model).parent_path() / "manifest.json";
  if (fs::exists(model_manifest)) seed = read_json(model_manifest).value("seed", std::uint64_t{0});

  EvaluationConfig cfg;
  cfg.bins = a.bins;
  cfg.significance = a.significance;
  cfg.c_index.half_credit_ties = a.half_credit;
  cfg.dataset_id = a.split + ":" + sha256_file(fs::path(a.data) / (a.split + ".csv")).substr(0, 12);
  cfg.model_id = sha256_file(a.model).substr(0, 12);
  const auto report = evaluate(model, data, subgroups, cfg);

  fs::create_directories(a.out);
  {
    auto f = open_out(fs::path(a.out) / "report.csv");
    write_report_csv(report, f);
  }
  {
    auto f = open_out(fs::path(a.out) / "report.txt");
    write_report_table(report, f);
  }
  rec.artifact("report.csv");
  rec.artifact("report.txt");
  write_report_curves(report, fs::path(a.out) / "curves");
  for (const auto& entry : fs::directory_iterator(fs::path(a.out) / "curves")) {
    rec.artifact(fs::path("curves") / entry.path().filename());
  }
  rec.seed(seed);
  rec.config() = {{"split", a.split}, {"bins", a.bins}, {"significance", a.significance},
                  {"half_credit", a.half_credit}};
  rec.write(a.out);
  write_report_table(report, out);
  return 0;
}

// -- counterexample ---------------------------------------------------------

struct CounterexampleArgs {
  std::string table;
  int bins = 5;
  std::string out;
};

int cmd_counterexample(const CounterexampleArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RunRecorder rec("counterexample", argv);
  const auto table = parse_counterexample_table(a.table);
  const auto res = run_counterexample(table, a.bins);
  const auto tau = static_cast<std::size_t>(res.dataset.tau);

  std::ostringstream text;
  text << "table: " << to_string(table) << " (" << res.dataset.size() << " records, tau=" << tau << ")\n";
  text << res.metric << " of the hand-specified predictions: " << format_double(res.value) << '\n';
  if (!res.per_time.empty()) {
    text << "Brier(t), t=1.." << tau << ":";
    for (double v : res.per_time) text << ' ' << format_double(v);
    text << '\n';
  }
  text << "marginal predicted S(" << tau << "): " << format_double(res.marginal.values[tau]) << '\n';
  text << "Kaplan-Meier S(" << tau << "): " << format_double(res.km.values[tau]) << '\n';
  if (table == CounterexampleTable::DCal) {
    text << "note: individual curves are an illustrative reconstruction; only S(t_i|x_i) enters D-Cal\n";
  }
  out << text.str();

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    {
      auto f = open_out(dir / "summary.txt");
      f << text.str();
    }
    {
      auto f = open_out(dir / "curves.csv");
      f << "t,marginal,km";
      for (std::size_t i = 0; i < res.dataset.size(); ++i) f << ",individual_" << (i + 1);
      f << '\n';
      for (std::size_t t = 0; t <= tau; ++t) {
        f << t << ',' << format_double(res.marginal.values[t]) << ',' << format_double(res.km.values[t]);
        for (std::size_t i = 0; i < res.dataset.size(); ++i) f << ',' << format_double(res.predictions(i, t));
        f << '\n';
      }
    }
    rec.artifact("summary.txt");
    rec.artifact("curves.csv");
    rec.config() = {{"table", a.table}, {"bins", a.bins}};
    rec.write(dir);
  }
  return 0;
}

// -- compare ----------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> systems;
  std::string metric = "total_score";
  double significance = 0.05;
  std::string out;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::map<std::string, double> values;  // subgroup -> metric
};

RunReport read_run(const fs::path& dir, const std::string& metric) {
  RunReport run;
  run.seed = read_json(dir / "manifest.json").value("seed", std::uint64_t{0});
  std::ifstream in(dir / "report.csv");
  if (!in) throw Error(ErrorCode::Io, "no report.csv in " + dir.string());
  std::string line;
  std::vector<std::string> header;
  std::size_t column = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_line(line, ',');
    if (header.empty()) {
      header = cells;
      const auto it = std::find(header.begin(), header.end(), metric);
      if (it == header.end()) throw Error(ErrorCode::InvalidArgument, "report has no column '" + metric + "'");
      column = static_cast<std::size_t>(it - header.begin());
      continue;
    }
    const auto v = detail::parse_double(cells.at(column));
    run.values[cells.at(0)] = v ? *v : std::numeric_limits<double>::quiet_NaN();
  }
  return run;
}

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RunRecorder rec("compare", argv);
  const bool lower_is_better = a.metric == "ece" || a.metric == "l2_distance" ||
                               a.metric == "var_adjusted_distance" || a.metric == "logrank_statistic";
  std::vector<std::string> names;
  std::vector<std::vector<RunReport>> runs;
  for (const auto& sys : a.systems) {
    const auto eq = sys.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--system expects name=dir1,dir2,...");
    names.push_back(sys.substr(0, eq));
    std::vector<RunReport> reports;
    for (const auto& dir : parse_list(sys.substr(eq + 1))) {
      reports.push_back(read_run(dir, a.metric));
      rec.input(fs::path(dir) / "report.csv");
    }
    runs.push_back(std::move(reports));
  }
  if (runs.size() < 2) throw Error(ErrorCode::MisalignedRuns, "need at least two systems to compare");
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (runs[s].size() < 2) throw Error(ErrorCode::MisalignedRuns, "system '" + names[s] + "' has fewer than 2 runs");
    if (runs[s].size() != runs[0].size()) throw Error(ErrorCode::MisalignedRuns, "systems differ in run count");
    for (std::size_t r = 0; r < runs[s].size(); ++r) {
      if (runs[s][r].seed != runs[0][r].seed) {
        throw Error(ErrorCode::MisalignedRuns, "run " + std::to_string(r) + " of '" + names[s] +
                                                   "' has a different seed than '" + names[0] + "'");
      }
    }
  }

  // Subgroups present in every run of every system.
  std::vector<std::string> groups;
  for (const auto& [g, _] : runs[0][0].values) {
    bool everywhere = true;
    for (const auto& sys : runs) {
      for (const auto& r : sys) everywhere = everywhere && r.values.count(g) && !std::isnan(r.values.at(g));
    }
    if (everywhere) groups.push_back(g);
  }

  std::ostringstream csv;
  csv << "system,versus,wins,losses,draws\n";
  std::ostringstream table;
  table << "metric: " << a.metric << " (" << (lower_is_better ? "lower" : "higher")
        << " is better), paired two-sided t-test at " << format_double(a.significance) << ", over "
        << groups.size() << " subgroup(s); cells are #wins-#losses-#draws of the row system\n";
  table << std::left << std::setw(16) << "";
  for (const auto& n : names) table << std::setw(12) << n;
  table << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    table << std::left << std::setw(16) << names[i];
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (i == j) {
        table << std::setw(12) << "-";
        continue;
      }
      int wins = 0, losses = 0, draws = 0;
      for (const auto& g : groups) {
        std::vector<double> x, y;
        for (std::size_t r = 0; r < runs[i].size(); ++r) {
          x.push_back(runs[i][r].values.at(g));
          y.push_back(runs[j][r].values.at(g));
        }
        const auto t = paired_t_test(x, y);
        const bool significant = t.p_value < a.significance;
        const bool i_better = lower_is_better ? t.mean_difference < 0.0 : t.mean_difference > 0.0;
        if (!significant || t.mean_difference == 0.0) {
          ++draws;
        } else if (i_better) {
          ++wins;
        } else {
          ++losses;
        }
      }
      csv << names[i] << ',' << names[j] << ',' << wins << ',' << losses << ',' << draws << '\n';
      table << std::setw(12) << (std::to_string(wins) + "-" + std::to_string(losses) + "-" + std::to_string(draws));
    }
    table << '\n';
  }
  out << table.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    {
      auto f = open_out(fs::path(a.out) / "compare.csv");
      f << csv.str();
    }
    {
      auto f = open_out(fs::path(a.out) / "compare.txt");
      f << table.str();
    }
    rec.artifact("compare.csv");
    rec.artifact("compare.txt");
    rec.config() = {{"metric", a.metric}, {"significance", a.significance}, {"systems", a.systems}};
    rec.write(a.out);
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multicalibrated discrete-time survival models", "mcsurv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(MCSURV_VERSION));

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse, discretize and split a delimited table");
  c_ingest->add_option("--input", ingest.input, "Input table")->required();
  c_ingest->add_option("--time-col", ingest.time_column, "Time column")->capture_default_str();
  c_ingest->add_option("--event-col", ingest.event_column, "Event column (1 = observed)")->capture_default_str();
  c_ingest->add_option("--features", ingest.features, "Comma-separated feature columns (default: all others)");
  c_ingest->add_option("--categorical", ingest.categorical, "Comma-separated categorical columns");
  c_ingest->add_option("--delimiter", ingest.delimiter, "Field delimiter")->capture_default_str();
  c_ingest->add_option("--tau", ingest.tau, "Number of discrete timesteps")->capture_default_str();
  c_ingest->add_option("--strategy", ingest.strategy, "uniform or quantile")->capture_default_str();
  c_ingest->add_option("--split", ingest.split, "train,validation,test fractions")->capture_default_str();
  c_ingest->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();
  c_ingest->add_flag("--standardize", ingest.standardize, "Center and scale numeric features using train statistics");
  c_ingest->add_option("--out", ingest.out, "Output directory")->required();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Write a synthetic grouped cohort with geometric event times");
  c_gen->add_option("--groups", gen.groups, "label:count:hazard,...")->capture_default_str();
  c_gen->add_option("--noise", gen.noise, "Standard normal noise covariates")->capture_default_str();
  c_gen->add_option("--censoring", gen.censoring, "Probability of a uniform censoring time")->capture_default_str();
  c_gen->add_option("--tau", gen.tau, "Number of discrete timesteps")->capture_default_str();
  c_gen->add_option("--split", gen.split, "train,validation,test fractions")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Generator and split seed")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a hazard model (graduate, drsa or rps)");
  c_train->add_option("--data", train.data, "Dataset directory from ingest/generate")->required();
  c_train->add_option("--mode", train.mode, "graduate, drsa or rps")->capture_default_str();
  c_train->add_option("--arch", train.arch, "linear_time, mlp_time or recurrent")->capture_default_str();
  c_train->add_option("--hidden", train.hidden, "Hidden width")->capture_default_str();
  c_train->add_option("--epsilon", train.epsilon, "Hazard clamp")->capture_default_str();
  c_train->add_option("--distance", train.distance, "l2 or var")->capture_default_str();
  c_train->add_option("--c", train.c, "Default slack for every constraint")->capture_default_str();
  c_train->add_option("--subgroups", train.subgroups, "Subgroup definitions file (may carry @c= overrides)");
  c_train->add_flag("--auto-subgroups", train.auto_subgroups, "Add automatically selected subgroups");
  c_train->add_option("--min-size", train.min_size, "Auto subgroup minimum size")->capture_default_str();
  c_train->add_option("--max-overlap", train.max_overlap, "Auto subgroup overlap limit")->capture_default_str();
  c_train->add_option("--max-arity", train.max_arity, "Auto subgroup feature cross size")->capture_default_str();
  c_train->add_option("--eta", train.trainer.eta, "Dual step size")->capture_default_str();
  c_train->add_option("--outer-iters", train.trainer.outer_iterations, "Outer iterations")->capture_default_str();
  c_train->add_option("--patience", train.trainer.patience, "Early-stopping window")->capture_default_str();
  c_train->add_option("--inner-steps", train.trainer.inner_steps, "SGD steps per outer iteration (0 = epoch)")
      ->capture_default_str();
  c_train->add_option("--inner-lr", train.trainer.inner_lr, "SGD learning rate")->capture_default_str();
  c_train->add_option("--batch-size", train.trainer.batch_size, "Minibatch size")->capture_default_str();
  c_train->add_option("--momentum", train.trainer.momentum, "SGD momentum")->capture_default_str();
  c_train->add_option("--mu-init-max", train.trainer.mu_init_max, "Dual init range [0, x]")->capture_default_str();
  c_train->add_option("--rps-weight", train.rps_weight, "RPS weight in rps mode")->capture_default_str();
  c_train->add_option("--seed", train.trainer.seed, "Init and batch seed")->capture_default_str();
  c_train->add_option("--out", train.out, "Run directory")->required();

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Per-subgroup calibration and discrimination report");
  c_eval->add_option("--model", eval.model, "Model artifact")->required();
  c_eval->add_option("--data", eval.data, "Dataset directory")->required();
  c_eval->add_option("--split", eval.split, "train, validation or test")->capture_default_str();
  c_eval->add_option("--subgroups", eval.subgroups, "Subgroup definitions file");
  c_eval->add_option("--bins", eval.bins, "ECE bins M")->capture_default_str();
  c_eval->add_option("--significance", eval.significance, "Logrank significance level")->capture_default_str();
  c_eval->add_flag("--half-credit", eval.half_credit, "C-index: 1/2 credit for ties");
  c_eval->add_option("--out", eval.out, "Report directory")->required();

  CounterexampleArgs cex;
  auto* c_cex = app.add_subcommand("counterexample", "Reproduce a metric counterexample (dcal, brier, rps)");
  c_cex->add_option("--table", cex.table, "dcal, brier or rps")->required();
  c_cex->add_option("--bins", cex.bins, "D-Cal intervals")->capture_default_str();
  c_cex->add_option("--out", cex.out, "Output directory (optional)");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Paired t-test win/loss/draw table across evaluate runs");
  c_cmp->add_option("--system", cmp.systems, "name=run_dir1,run_dir2,... (repeat per system)")->required();
  c_cmp->add_option("--metric", cmp.metric, "Report column to compare")->capture_default_str();
  c_cmp->add_option("--significance", cmp.significance, "Test level")->capture_default_str();
  c_cmp->add_option("--out", cmp.out, "Output directory (optional)");

  app.set_config("--config", "", "key=value config file; options go under a [subcommand] section");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest, args, out);
    if (*c_gen) return cmd_generate(gen, args, out);
    if (*c_train) return cmd_train(train, args, out, err);
    if (*c_eval) return cmd_evaluate(eval, args, out);
    if (*c_cex) return cmd_counterexample(cex, args, out);
    if (*c_cmp) return cmd_compare(cmp, args, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace mcsurv::cli
