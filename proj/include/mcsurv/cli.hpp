#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mcsurv/data.hpp"
#include "mcsurv/estimators.hpp"
#include "mcsurv/matrix.hpp"

namespace mcsurv::cli {

/// Entry point shared by the executable and the tests. Returns the process
/// exit code; 0 iff no error surfaced.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Re-hashes every input and artifact listed in `run_dir/manifest.json`.
struct ManifestCheck {
  bool ok = true;
  std::vector<std::string> problems;
};
ManifestCheck verify_manifest(const std::filesystem::path& run_dir);

/// The hand-specified predictions that go with each counterexample table:
///  - dcal: S(t|x_i) falls linearly from 1 at t=0 to 0.15 + 0.2 (i-1) at
///    t_i = i and stays flat afterwards (an illustrative reconstruction;
///    only S(t_i|x_i) enters D-Cal).
///  - brier: 1 before t_i, 0 from t_i on, for everyone.
///  - rps: 1 before t_i, 0 from t_i on, for uncensored records; censored
///    curves are identically 1.
Matrix counterexample_predictions(CounterexampleTable table);

struct CounterexampleResult {
  CounterexampleTable table = CounterexampleTable::DCal;
  std::string metric;
  /// D-Cal, max_t Brier(t), or RPS.
  double value = 0.0;
  /// Brier(t) for t = 1..tau (brier table only).
  std::vector<double> per_time;
  DiscreteDataset dataset;
  Matrix predictions;
  SurvivalCurve marginal;
  SurvivalCurve km;
};

CounterexampleResult run_counterexample(CounterexampleTable table, int dcal_bins = 5);

}  // namespace mcsurv::cli
