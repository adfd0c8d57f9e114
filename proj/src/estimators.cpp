#include "mcsurv/estimators.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <fstream>
#include <limits>

#include "mcsurv/error.hpp"
#include "text_util.hpp"

namespace mcsurv {

namespace {

void check_times(std::span<const Observation> records, int tau) {
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "tau must be >= 1");
  for (const auto& r : records) {
    if (r.time < 1 || r.time > tau) {
      throw Error(ErrorCode::InvalidArgument,
                  "time " + std::to_string(r.time) + " outside 1.." + std::to_string(tau));
    }
  }
}

// Per-timestep at-risk and event counts on 1..tau (index 0 unused).
struct RiskTable {
  std::vector<int> at_risk;
  std::vector<int> events;
};

RiskTable risk_table(std::span<const Observation> records, int tau) {
  RiskTable table{std::vector<int>(tau + 2, 0), std::vector<int>(tau + 1, 0)};
  std::vector<int> leaving(tau + 2, 0);
  for (const auto& r : records) {
    ++leaving[r.time];
    if (r.event) ++table.events[r.time];
  }
  int remaining = static_cast<int>(records.size());
  for (int t = 1; t <= tau; ++t) {
    table.at_risk[t] = remaining;
    remaining -= leaving[t];
  }
  return table;
}

}  // namespace

SurvivalCurve km_curve(std::span<const Observation> records, int tau) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "Kaplan-Meier needs at least one record");
  check_times(records, tau);
  const auto table = risk_table(records, tau);

  SurvivalCurve curve;
  curve.values.assign(tau + 1, 1.0);
  curve.variance.assign(tau + 1, 0.0);
  curve.variance_flag.assign(tau + 1, VarianceFlag::BeforeFirstEvent);

  // The product of (k - e) / k telescopes between censorings, so each
  // censoring-free stretch costs a single division: S = anchor * left / base.
  double s = 1.0;
  double anchor = 1.0;
  int base = table.at_risk[1];
  int expected = base;
  double greenwood = 0.0;
  bool seen_event = false;
  bool undefined = false;
  for (int t = 1; t <= tau; ++t) {
    const int e = table.events[t];
    const int k = table.at_risk[t];
    if (k != expected) {
      anchor = s;
      base = k;
    }
    expected = k - e;
    if (e > 0) {
      curve.event_times.push_back(t);
      curve.n_at_risk.push_back(k);
      curve.n_events.push_back(e);
      s = anchor * (static_cast<double>(k - e) / static_cast<double>(base));
      seen_event = true;
      if (k == e) {
        undefined = true;
      } else {
        greenwood += static_cast<double>(e) / (static_cast<double>(k) * static_cast<double>(k - e));
      }
    }
    curve.values[t] = s;
    if (undefined) {
      curve.variance_flag[t] = VarianceFlag::Undefined;
    } else if (seen_event) {
      curve.variance_flag[t] = VarianceFlag::Valid;
      curve.variance[t] = s * s * greenwood;
    }
  }
  return curve;
}

SurvivalCurve censoring_km(std::span<const Observation> records, int tau) {
  std::vector<Observation> flipped(records.begin(), records.end());
  for (auto& r : flipped) r.event = !r.event;
  return km_curve(flipped, tau);
}

double chi_square_critical(double significance) {
  if (!(significance > 0.0 && significance < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "significance must lie in (0,1)");
  }
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(1.0), significance));
}

LogrankResult logrank_two_sample(std::span<const Observation> group_a, std::span<const Observation> group_b,
                                 int tau, double significance) {
  if (group_a.empty() || group_b.empty()) {
    throw Error(ErrorCode::EmptyInput, "both logrank groups must be non-empty");
  }
  check_times(group_a, tau);
  check_times(group_b, tau);
  const auto a = risk_table(group_a, tau);
  const auto b = risk_table(group_b, tau);

  double observed = 0.0;
  double expected = 0.0;
  double variance = 0.0;
  bool any_event = false;
  for (int t = 1; t <= tau; ++t) {
    const double d = a.events[t] + b.events[t];
    if (d == 0) continue;
    any_event = true;
    const double na = a.at_risk[t];
    const double nb = b.at_risk[t];
    const double n = na + nb;
    observed += a.events[t];
    expected += d * na / n;
    if (n > 1.0) variance += na * nb * d * (n - d) / (n * n * (n - 1.0));
  }
  if (!any_event) throw Error(ErrorCode::NoEvents, "neither group has an observed event");

  LogrankResult result;
  result.significance = significance;
  const double diff = observed - expected;
  if (variance > 0.0) {
    result.statistic = diff * diff / variance;
  } else {
    result.statistic = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  result.passed = result.statistic <= chi_square_critical(significance);
  return result;
}

LogrankResult logrank_one_sample(std::span<const Observation> records, const SurvivalCurve& reference, int tau,
                                 double significance) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "one-sample logrank needs records");
  check_times(records, tau);
  if (reference.tau() < tau) throw Error(ErrorCode::LengthMismatch, "reference curve shorter than tau");
  const auto table = risk_table(records, tau);

  double observed = 0.0;
  double expected = 0.0;
  for (int t = 1; t <= tau; ++t) {
    observed += table.events[t];
    if (table.at_risk[t] == 0) continue;
    const double prev = reference.values[t - 1];
    if (prev <= 0.0) {
      throw Error(ErrorCode::ZeroReferenceSurvival,
                  "reference survival is 0 at t=" + std::to_string(t - 1) + " with individuals at risk");
    }
    const double hazard = 1.0 - reference.values[t] / prev;
    expected += table.at_risk[t] * hazard;
  }

  LogrankResult result;
  result.significance = significance;
  const double diff = observed - expected;
  if (expected > 0.0) {
    result.statistic = diff * diff / expected;
  } else {
    result.statistic = observed == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  result.passed = result.statistic <= chi_square_critical(significance);
  return result;
}

void write_curve(const SurvivalCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "t,S,variance,flag\n";
  for (int t = 0; t <= curve.tau(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    out << t << ',' << detail::format_double(curve.values[i]) << ','
        << detail::format_double(curve.has_variance() ? curve.variance[i] : 0.0) << ','
        << (i < curve.variance_flag.size() ? static_cast<int>(curve.variance_flag[i]) : 0) << '\n';
  }
}

}  // namespace mcsurv
