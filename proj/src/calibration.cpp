#include "mcsurv/calibration.hpp"

#include <cmath>

#include "mcsurv/error.hpp"
#include "mcsurv/losses.hpp"

namespace mcsurv {

namespace {

void check_lengths(std::size_t predicted, std::size_t reference) {
  if (predicted != reference) {
    throw Error(ErrorCode::LengthMismatch, "curve lengths differ (" + std::to_string(predicted) + " vs " +
                                               std::to_string(reference) + ")");
  }
  if (predicted < 2) throw Error(ErrorCode::LengthMismatch, "curves need at least t = 0 and t = 1");
}

bool counted(const SurvivalCurve& reference, std::size_t t) {
  return reference.variance_flag[t] == VarianceFlag::Valid && reference.variance[t] > 0.0;
}

}  // namespace

DistanceGradient distance_with_gradient(DistanceKind kind, std::span<const double> predicted,
                                        const SurvivalCurve& reference) {
  check_lengths(predicted.size(), reference.values.size());
  const std::size_t n = predicted.size();
  const double tau = static_cast<double>(n - 1);
  DistanceGradient out{0.0, std::vector<double>(n, 0.0)};

  if (kind == DistanceKind::L2) {
    for (std::size_t t = 1; t < n; ++t) {
      const double diff = predicted[t] - reference.values[t];
      out.value += diff * diff;
      out.gradient[t] = 2.0 * diff / tau;
    }
    out.value /= tau;
    return out;
  }

  if (!reference.has_variance() || reference.variance_flag.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "reference curve carries no variance");
  }
  std::size_t best = 0;
  double best_z = -1.0;
  double best_sign = 0.0;
  double best_sd = 1.0;
  for (std::size_t t = 1; t < n; ++t) {
    if (!counted(reference, t)) continue;
    const double sd = std::sqrt(reference.variance[t]);
    const double diff = predicted[t] - reference.values[t];
    const double z = std::abs(diff) / sd;
    if (z > best_z) {  // strict: ties keep the earliest t
      best = t;
      best_z = z;
      best_sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      best_sd = sd;
    }
  }
  if (best == 0) throw Error(ErrorCode::AllTimestepsSkipped, "no timestep with a usable Greenwood variance");
  out.value = best_z;
  out.gradient[best] = best_sign / best_sd;
  return out;
}

double distance(DistanceKind kind, const SurvivalCurve& predicted, const SurvivalCurve& reference) {
  return distance_with_gradient(kind, predicted.values, reference).value;
}

double l2_distance(const SurvivalCurve& predicted, const SurvivalCurve& reference) {
  return distance(DistanceKind::L2, predicted, reference);
}

double variance_adjusted_distance(const SurvivalCurve& predicted, const SurvivalCurve& reference) {
  return distance(DistanceKind::VarianceAdjusted, predicted, reference);
}

std::vector<std::size_t> ece_bin_counts(const SurvivalCurve& predicted, int bins) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double p : predicted.values) ++counts[static_cast<std::size_t>(probability_bin(p, bins) - 1)];
  return counts;
}

double ece(const SurvivalCurve& predicted, const SurvivalCurve& reference, int bins) {
  check_lengths(predicted.values.size(), reference.values.size());
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bin count must be >= 1");
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<double> sum_model(nb, 0.0);
  std::vector<double> sum_ref(nb, 0.0);
  std::vector<std::size_t> count(nb, 0);
  for (std::size_t t = 0; t < predicted.values.size(); ++t) {
    const auto m = static_cast<std::size_t>(probability_bin(predicted.values[t], bins) - 1);
    sum_model[m] += predicted.values[t];
    sum_ref[m] += reference.values[t];
    ++count[m];
  }
  const double total = static_cast<double>(predicted.values.size());
  double out = 0.0;
  for (std::size_t m = 0; m < nb; ++m) {
    if (count[m] == 0) continue;
    const double k = static_cast<double>(count[m]);
    out += (k / total) * std::abs(sum_ref[m] / k - sum_model[m] / k);
  }
  return out;
}

std::vector<ConstraintContext> prepare_constraints(const std::vector<ConstraintSpec>& specs,
                                                   const DiscreteDataset& dataset) {
  std::vector<ConstraintContext> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    auto rows = members(spec.subgroup, dataset);
    if (rows.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup '" + spec.subgroup.name + "' has no members");
    auto km = km_curve(dataset.observations(rows), dataset.tau);
    out.push_back({spec, std::move(rows), std::move(km)});
  }
  return out;
}

Penalty constraint_penalty(const Matrix& hazards, const Matrix& survival, const ConstraintContext& context) {
  if (context.members.empty()) {
    throw Error(ErrorCode::EmptySubgroup, "subgroup '" + context.spec.subgroup.name + "' has no members");
  }
  const auto marginal = marginal_survival(survival, context.members);
  const auto dist = distance_with_gradient(context.spec.distance, marginal.values, context.km);

  Penalty out;
  out.distance = dist.value;
  out.value = dist.value - context.spec.c;
  out.cotangents = Matrix(context.members.size(), hazards.cols());

  // d marginal(t) / d S_j(t) = 1 / N_i for every member j.
  const double inv = 1.0 / static_cast<double>(context.members.size());
  std::vector<double> gs(dist.gradient.size());
  for (std::size_t t = 0; t < gs.size(); ++t) gs[t] = dist.gradient[t] * inv;
  for (std::size_t k = 0; k < context.members.size(); ++k) {
    const auto row = context.members[k];
    survival_cotangent_to_hazard(hazards.row(row), survival.row(row), gs, out.cotangents.row(k));
  }
  return out;
}

Penalty constraint_penalty(const HazardModel& model, const Matrix& inputs, const ConstraintContext& context) {
  std::vector<std::size_t> rows(inputs.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto tape = record(model, inputs, rows);
  return constraint_penalty(tape.hazards(), survival_from_hazards(tape.hazards()), context);
}

double lagrangian(const HazardModel& model, const Matrix& inputs, std::span<const Observation> observations,
                  std::span<const ConstraintContext> constraints, std::span<const double> mu,
                  std::vector<double>* gradient) {
  if (mu.size() != constraints.size()) throw Error(ErrorCode::DimensionMismatch, "one multiplier per constraint");
  std::vector<std::size_t> rows(inputs.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto tape = record(model, inputs, rows);
  const auto survival = survival_from_hazards(tape.hazards());

  auto loss = drsa_loss(tape.hazards(), observations, model.epsilon());
  double value = loss.value;
  Matrix cot = std::move(*loss.cotangents);
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const auto p = constraint_penalty(tape.hazards(), survival, constraints[i]);
    value += mu[i] * p.value;
    for (std::size_t k = 0; k < constraints[i].members.size(); ++k) {
      auto dst = cot.row(constraints[i].members[k]);
      const auto src = p.cotangents.row(k);
      for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += mu[i] * src[t];
    }
  }
  if (gradient) *gradient = backward(model, tape, cot);
  return value;
}

}  // namespace mcsurv
