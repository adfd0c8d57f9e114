#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mcsurv/data.hpp"

namespace mcsurv {

enum class VarianceFlag : std::uint8_t {
  Valid,
  /// No event has happened yet, the Greenwood sum is empty.
  BeforeFirstEvent,
  /// Some earlier event time had everyone at risk fail (k == e), so the
  /// Greenwood sum diverges; the variance is reported as 0.
  Undefined,
};

/// Survival probabilities on the grid t = 0..tau with values[0] = 1.
/// Curves produced by km_curve also carry Greenwood variance and the
/// per-event-time risk table; model curves leave those empty.
struct SurvivalCurve {
  std::vector<double> values;
  std::vector<double> variance;
  std::vector<VarianceFlag> variance_flag;
  std::vector<int> event_times;
  std::vector<int> n_at_risk;
  std::vector<int> n_events;

  int tau() const noexcept { return static_cast<int>(values.size()) - 1; }
  bool has_variance() const noexcept { return variance.size() == values.size(); }
};

/// Kaplan-Meier product over unique event times with Greenwood variance.
/// Throws EmptyInput when `records` is empty.
SurvivalCurve km_curve(std::span<const Observation> records, int tau);

/// Kaplan-Meier curve of the censoring distribution, G(t) = P(C > t): the
/// same estimator with the event indicator flipped.
SurvivalCurve censoring_km(std::span<const Observation> records, int tau);

struct LogrankResult {
  double statistic = 0.0;
  bool passed = true;
  double significance = 0.05;
};

/// Upper (1 - significance) quantile of the chi-square distribution with one
/// degree of freedom.
double chi_square_critical(double significance);

/// Two-group logrank test. Throws NoEvents when neither group has an event.
LogrankResult logrank_two_sample(std::span<const Observation> group_a, std::span<const Observation> group_b,
                                 int tau, double significance = 0.05);

/// One-sample logrank test of observed data against a fixed reference curve:
/// expected events at t are (number at risk) * (1 - S(t)/S(t-1)).
/// If the reference predicts no events but some are observed the statistic
/// is +infinity and the test fails.
LogrankResult logrank_one_sample(std::span<const Observation> records, const SurvivalCurve& reference, int tau,
                                 double significance = 0.05);

/// Columns t, S, variance, flag.
void write_curve(const SurvivalCurve& curve, const std::filesystem::path& path);

}  // namespace mcsurv
