#include "mcsurv/losses.hpp"

#include <cmath>

#include "mcsurv/error.hpp"

namespace mcsurv {

namespace {

void check_batch(const Matrix& hazards, std::span<const Observation> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "loss over an empty batch");
  if (hazards.rows() != batch.size()) throw Error(ErrorCode::DimensionMismatch, "hazard rows != batch size");
  const auto tau = static_cast<int>(hazards.cols());
  for (const auto& r : batch) {
    if (r.time < 1 || r.time > tau) throw Error(ErrorCode::InvalidArgument, "record time outside 1..tau");
  }
}

void check_survival(const Matrix& survival, std::span<const Observation> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "metric over an empty dataset");
  if (survival.rows() != records.size()) throw Error(ErrorCode::DimensionMismatch, "survival rows != records");
  const auto tau = static_cast<int>(survival.cols()) - 1;
  for (const auto& r : records) {
    if (r.time < 1 || r.time > tau) throw Error(ErrorCode::InvalidArgument, "record time outside 1..tau");
  }
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// DRSA

LossValue drsa_loss(const Matrix& hazards, std::span<const Observation> batch, double epsilon) {
  check_batch(hazards, batch);
  const std::size_t tau = hazards.cols();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Matrix cot(batch.size(), tau);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto h = hazards.row(b);
    auto g = cot.row(b);
    const auto t = static_cast<std::size_t>(batch[b].time);  // 1-based

    double term = 0.0;
    for (std::size_t l = 0; l + 1 < t; ++l) {
      term -= std::log1p(-h[l]);
      g[l] += inv_n / (1.0 - h[l]);
    }
    if (batch[b].event) {
      term -= std::log(h[t - 1]);
      g[t - 1] += -inv_n / h[t - 1];

      double log_prod = 0.0;  // log prod_{t' < tau} (1 - h_t')
      for (std::size_t l = 0; l + 1 < tau; ++l) log_prod += std::log1p(-h[l]);
      const double one_minus = -std::expm1(log_prod);
      if (one_minus > epsilon) {
        term -= std::log(one_minus);
        const double prod = std::exp(log_prod);
        for (std::size_t l = 0; l + 1 < tau; ++l) g[l] += -inv_n * prod / (one_minus * (1.0 - h[l]));
      } else {
        term -= std::log(epsilon);
      }
    }
    total += term;
  }
  return {total * inv_n, std::move(cot)};
}

LossValue drsa_loss(const HazardModel& model, const DiscreteDataset& batch) {
  const auto x = design_matrix(batch);
  const auto tape = record(model, x, all_rows(batch.size()));
  return drsa_loss(tape.hazards(), batch.observations(), model.epsilon());
}

// ---------------------------------------------------------------------------
// RPS

double rps_score(const Matrix& survival, std::span<const Observation> batch) {
  check_survival(survival, batch);
  const auto tau = static_cast<int>(survival.cols()) - 1;
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto s = survival.row(b);
    const int ti = batch[b].time;
    if (batch[b].event) {
      for (int t = 0; t <= tau; ++t) {
        const double diff = s[static_cast<std::size_t>(t)] - (t < ti ? 1.0 : 0.0);
        total += diff * diff;
      }
    } else {
      for (int t = 0; t <= ti; ++t) {
        const double diff = s[static_cast<std::size_t>(t)] - 1.0;
        total += diff * diff;
      }
    }
  }
  return total;
}

LossValue rps_loss(const Matrix& hazards, std::span<const Observation> batch) {
  check_batch(hazards, batch);
  const auto survival = survival_from_hazards(hazards);
  const auto tau = static_cast<int>(hazards.cols());

  Matrix cot(batch.size(), hazards.cols());
  std::vector<double> gs(hazards.cols() + 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto s = survival.row(b);
    const int ti = batch[b].time;
    std::fill(gs.begin(), gs.end(), 0.0);
    const int last = batch[b].event ? tau : ti;
    for (int t = 0; t <= last; ++t) {
      const double target = batch[b].event ? (t < ti ? 1.0 : 0.0) : 1.0;
      gs[static_cast<std::size_t>(t)] = 2.0 * (s[static_cast<std::size_t>(t)] - target);
    }
    survival_cotangent_to_hazard(hazards.row(b), s, gs, cot.row(b));
  }
  return {rps_score(survival, batch), std::move(cot)};
}

LossValue rps_loss(const HazardModel& model, const DiscreteDataset& batch) {
  const auto x = design_matrix(batch);
  const auto tape = record(model, x, all_rows(batch.size()));
  return rps_loss(tape.hazards(), batch.observations());
}

// ---------------------------------------------------------------------------
// D-Calibration

int probability_bin(double p, int bins) {
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bin count must be >= 1");
  if (!(p > 0.0)) return 1;
  if (p >= 1.0) return bins;
  int m = static_cast<int>(std::ceil(p * bins));
  m = std::clamp(m, 1, bins);
  // Guard against p * bins rounding just above an integer boundary.
  if (m > 1 && p <= static_cast<double>(m - 1) / bins) --m;
  if (m < bins && p > static_cast<double>(m) / bins) ++m;
  return m;
}

double dcal_metric(const Matrix& survival, std::span<const Observation> records, const DCalOptions& options) {
  check_survival(survival, records);
  if (options.bins < 1) throw Error(ErrorCode::InvalidArgument, "bin count must be >= 1");
  const int bins = options.bins;
  std::vector<double> mass(static_cast<std::size_t>(bins), 0.0);

  auto denominator = [&options](double v) {
    if (options.clamp) return std::max(v, options.epsilon);
    if (v == 0.0) throw Error(ErrorCode::DegenerateDenominator, "zero denominator in censored D-Cal term");
    return v;
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    const double f = 1.0 - survival(i, static_cast<std::size_t>(records[i].time));
    const int home = probability_bin(f, bins);
    if (records[i].event) {
      mass[static_cast<std::size_t>(home - 1)] += 1.0;
      continue;
    }
    const double upper = static_cast<double>(home) / bins;
    mass[static_cast<std::size_t>(home - 1)] += (upper - f) / denominator(1.0 - f);
    for (int m = home + 1; m <= bins; ++m) {
      const double a = static_cast<double>(m - 1) / bins;
      const double b = static_cast<double>(m) / bins;
      if (f < a) mass[static_cast<std::size_t>(m - 1)] += (b - a) / denominator(f);
    }
  }

  const double n = static_cast<double>(records.size());
  const double width = 1.0 / bins;
  double total = 0.0;
  for (double m : mass) {
    const double diff = m / n - width;
    total += diff * diff;
  }
  return total;
}

double dcal_metric(const HazardModel& model, const DiscreteDataset& dataset, const DCalOptions& options) {
  return dcal_metric(predict_survival(model, design_matrix(dataset)), dataset.observations(), options);
}

// ---------------------------------------------------------------------------
// Brier

BrierValue brier_score(const Matrix& survival, std::span<const Observation> records, int t,
                       const SurvivalCurve& censoring, double epsilon) {
  check_survival(survival, records);
  const auto tau = static_cast<int>(survival.cols()) - 1;
  if (t < 1 || t > tau) throw Error(ErrorCode::InvalidArgument, "Brier time outside 1..tau");
  if (censoring.tau() < tau) throw Error(ErrorCode::LengthMismatch, "censoring curve shorter than tau");

  BrierValue out;
  auto weight = [&](int at) {
    double g = censoring.values[static_cast<std::size_t>(at)];
    if (g < epsilon) {
      g = epsilon;
      out.clamped = true;
    }
    return g;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double s = survival(i, static_cast<std::size_t>(t));
    if (records[i].time <= t && records[i].event) {
      total += s * s / weight(records[i].time);
    } else if (records[i].time > t) {
      total += (1.0 - s) * (1.0 - s) / weight(t);
    }
  }
  out.value = total / static_cast<double>(records.size());
  return out;
}

BrierValue brier_score(const HazardModel& model, const DiscreteDataset& dataset, int t,
                       const SurvivalCurve& censoring, double epsilon) {
  return brier_score(predict_survival(model, design_matrix(dataset)), dataset.observations(), t, censoring, epsilon);
}

BrierValue integrated_brier(const Matrix& survival, std::span<const Observation> records,
                            const SurvivalCurve& censoring, double epsilon) {
  const auto tau = static_cast<int>(survival.cols()) - 1;
  BrierValue out;
  for (int t = 1; t <= tau; ++t) {
    const auto b = brier_score(survival, records, t, censoring, epsilon);
    out.value += b.value;
    out.clamped = out.clamped || b.clamped;
  }
  out.value /= tau;
  return out;
}

BrierValue integrated_brier(const HazardModel& model, const DiscreteDataset& dataset, const SurvivalCurve& censoring,
                            double epsilon) {
  return integrated_brier(predict_survival(model, design_matrix(dataset)), dataset.observations(), censoring, epsilon);
}

}  // namespace mcsurv
