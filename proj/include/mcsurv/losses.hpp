#pragma once

#include <optional>
#include <span>

#include "mcsurv/data.hpp"
#include "mcsurv/estimators.hpp"
#include "mcsurv/hazard_model.hpp"
#include "mcsurv/matrix.hpp"

namespace mcsurv {

/// A loss value and, for the differentiable losses (DRSA, RPS), its
/// per-example per-timestep cotangent dL/dh (batch x tau).
struct LossValue {
  double value = 0.0;
  std::optional<Matrix> cotangents;
};

/// Mean over the batch of the DRSA negative log-likelihood:
///   uncensored: -log h_t - sum_{t'<t} log(1-h_t') - log(1 - prod_{t'<tau} (1-h_t'))
///   censored:   -sum_{t'<t} log(1-h_t')
/// Log terms are evaluated with log1p/expm1. `1 - prod` is floored at
/// `epsilon` (only reachable when tau == 1, where the product is empty).
LossValue drsa_loss(const Matrix& hazards, std::span<const Observation> batch, double epsilon = 1e-6);
LossValue drsa_loss(const HazardModel& model, const DiscreteDataset& batch);

/// Ranked probability score, summed (not averaged) over the batch:
///   uncensored: sum_{t=0}^{tau} (S(t) - [t < t_i])^2
///   censored:   sum_{t=0}^{t_i} (S(t) - 1)^2
/// with S(0) = 1 included.
double rps_score(const Matrix& survival, std::span<const Observation> batch);
LossValue rps_loss(const Matrix& hazards, std::span<const Observation> batch);
LossValue rps_loss(const HazardModel& model, const DiscreteDataset& batch);

/// Index in 1..bins of the half-open interval ((m-1)/bins, m/bins] holding
/// `p`; p <= 0 goes to bin 1 and p > 1 to the last bin.
int probability_bin(double p, int bins);

struct DCalOptions {
  int bins = 10;
  /// Floor applied to the F and 1-F denominators of the censored term.
  double epsilon = 1e-6;
  /// When false a zero denominator raises DegenerateDenominator instead.
  bool clamp = true;
};

/// D-Calibration over F(t_i|x_i) = 1 - S(t_i|x_i):
///   sum_m (mean_i G_i(I_m) - 1/bins)^2
/// with G the indicator for uncensored records and, for censored ones,
///   (b - F)/(1 - F) in the interval containing F plus (b - a)/F in every
///   interval lying entirely above F.
double dcal_metric(const Matrix& survival, std::span<const Observation> records, const DCalOptions& options = {});
double dcal_metric(const HazardModel& model, const DiscreteDataset& dataset, const DCalOptions& options = {});

struct BrierValue {
  double value = 0.0;
  /// True when some censoring-survival denominator was below epsilon and
  /// had to be floored.
  bool clamped = false;
};

/// IPCW Brier score at time t using the censoring curve `censoring`
/// (G(t) = P(C > t), see censoring_km).
BrierValue brier_score(const Matrix& survival, std::span<const Observation> records, int t,
                       const SurvivalCurve& censoring, double epsilon = 1e-6);
BrierValue brier_score(const HazardModel& model, const DiscreteDataset& dataset, int t,
                       const SurvivalCurve& censoring, double epsilon = 1e-6);

/// Mean of brier_score over t = 1..tau.
BrierValue integrated_brier(const Matrix& survival, std::span<const Observation> records,
                            const SurvivalCurve& censoring, double epsilon = 1e-6);
BrierValue integrated_brier(const HazardModel& model, const DiscreteDataset& dataset, const SurvivalCurve& censoring,
                            double epsilon = 1e-6);

}  // namespace mcsurv
