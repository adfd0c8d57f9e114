#pragma once

#include <span>
#include <vector>

#include "mcsurv/data.hpp"
#include "mcsurv/estimators.hpp"
#include "mcsurv/hazard_model.hpp"
#include "mcsurv/matrix.hpp"
#include "mcsurv/subgroups.hpp"

namespace mcsurv {

/// (1/tau) sum_{t=1}^{tau} (predicted(t) - reference(t))^2.
double l2_distance(const SurvivalCurve& predicted, const SurvivalCurve& reference);

/// max over valid t of |predicted(t) - reference(t)| / sqrt(var(t)), where
/// var comes from `reference`. Timesteps before the first event, with an
/// undefined Greenwood sum, or with zero variance are skipped; throws
/// AllTimestepsSkipped when nothing is left.
double variance_adjusted_distance(const SurvivalCurve& predicted, const SurvivalCurve& reference);

/// Distance value plus d(distance)/d predicted(t) for t = 0..tau. For the
/// variance-adjusted max the subgradient sits on the first maximizing t.
struct DistanceGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

DistanceGradient distance_with_gradient(DistanceKind kind, std::span<const double> predicted,
                                        const SurvivalCurve& reference);
double distance(DistanceKind kind, const SurvivalCurve& predicted, const SurvivalCurve& reference);

/// Expected calibration error of `predicted` against `reference` over
/// t = 0..tau, binning timesteps by predicted value into `bins` intervals
/// ((m-1)/M, m/M] (0 goes to the first bin).
double ece(const SurvivalCurve& predicted, const SurvivalCurve& reference, int bins = 10);

/// Per-bin timestep counts used by ece(); exposed for audits.
std::vector<std::size_t> ece_bin_counts(const SurvivalCurve& predicted, int bins = 10);

/// The theta-independent part of a constraint on one dataset: member rows
/// and the subgroup's Kaplan-Meier curve.
struct ConstraintContext {
  ConstraintSpec spec;
  std::vector<std::size_t> members;
  SurvivalCurve km;
};

/// Resolves memberships and KM curves once. Throws EmptySubgroup.
std::vector<ConstraintContext> prepare_constraints(const std::vector<ConstraintSpec>& specs,
                                                   const DiscreteDataset& dataset);

/// p = dist(marginal, KM) - c for one constraint, and dp/dh for every member
/// (rows aligned with context.members).
struct Penalty {
  double value = 0.0;
  double distance = 0.0;
  Matrix cotangents;
};

/// `hazards` and `survival` cover every dataset row (N x tau, N x tau+1).
Penalty constraint_penalty(const Matrix& hazards, const Matrix& survival, const ConstraintContext& context);
Penalty constraint_penalty(const HazardModel& model, const Matrix& inputs, const ConstraintContext& context);

/// Full-batch empirical Lagrangian: mean DRSA loss over all rows plus
/// sum_i mu_i * p_i. Writes the exact parameter gradient into `gradient`
/// when it is non-null.
double lagrangian(const HazardModel& model, const Matrix& inputs, std::span<const Observation> observations,
                  std::span<const ConstraintContext> constraints, std::span<const double> mu,
                  std::vector<double>* gradient = nullptr);

}  // namespace mcsurv
