#include "mcsurv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include "mcsurv/error.hpp"
#include "mcsurv/losses.hpp"
#include "mcsurv/metrics.hpp"
#include "text_util.hpp"

namespace mcsurv {

void TrainerConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(eta > 0.0)) fail("eta must be > 0");
  if (outer_iterations < 1) fail("outer_iterations must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (inner_steps < 0) fail("inner_steps must be >= 0 (0 = one epoch)");
  if (!(inner_lr >= 0.0)) fail("inner_lr must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(mu_init_max >= 0.0)) fail("mu_init_max must be >= 0");
  if (!(rps_weight >= 0.0)) fail("rps_weight must be >= 0");
}

int TrainerConfig::steps_per_iteration(std::size_t n) const {
  if (inner_steps > 0) return inner_steps;
  return static_cast<int>((n + batch_size - 1) / batch_size);
}

std::string to_string(BaselineMode mode) { return mode == BaselineMode::Drsa ? "drsa" : "drsa_rps"; }

BatchSchedule::BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed), order_(n), cursor_(n) {
  if (n == 0 || batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch schedule needs n, batch_size > 0");
}

std::vector<std::size_t> BatchSchedule::next() {
  if (cursor_ >= n_) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  const std::size_t end = std::min(n_, cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

void dual_update(std::vector<double>& mu, std::span<const double> penalties, double eta) {
  if (mu.size() != penalties.size()) throw Error(ErrorCode::DimensionMismatch, "one penalty per multiplier");
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = std::max(0.0, mu[i] + eta * penalties[i]);
}

std::size_t select_model(const std::vector<HistoryEntry>& history) {
  if (history.empty()) throw Error(ErrorCode::EmptyInput, "no snapshot to select from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    const auto& a = history[k];
    const auto& b = history[best];
    if (a.satisfied > b.satisfied || (a.satisfied == b.satisfied && a.c_index > b.c_index)) best = k;
  }
  return best;
}

namespace {

// Subgroup bookkeeping on one split: member rows, the KM reference, and for
// the training split a running sum of cached member survival curves so the
// marginal can be refreshed per minibatch.
struct ConstraintTrack {
  ConstraintContext context;
  std::vector<int> position;  // row -> index in members, or -1
  std::vector<double> sum;    // sum of cached survival rows over members
};

struct Snapshot {
  std::size_t satisfied = 0;
  double c_index = -1.0;
  int iteration = 0;
};

void check_finite(double value, int iteration, int step, const char* what) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NonFiniteLoss, std::string(what) + " became non-finite at outer iteration " +
                                              std::to_string(iteration) + ", inner step " + std::to_string(step));
  }
}

class Loop {
 public:
  Loop(const HazardModel& init, const DiscreteDataset& train, const DiscreteDataset& validation,
       const std::vector<ConstraintSpec>& constraints, bool graduate, BaselineMode mode, const TrainerConfig& config)
      : config_(config),
        graduate_(graduate),
        mode_(mode),
        state_{init, {}, {}},
        selected_(init),
        x_train_(design_matrix(train)),
        obs_train_(train.observations()),
        x_val_(design_matrix(validation)),
        obs_val_(validation.observations()),
        tau_(static_cast<std::size_t>(train.tau)) {
    config.validate();
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "training split is empty");
    if (validation.empty()) throw Error(ErrorCode::EmptyInput, "validation split is empty");
    if (train.tau != init.tau() || validation.tau != init.tau()) {
      throw Error(ErrorCode::DimensionMismatch, "dataset tau does not match the model");
    }

    for (const auto& spec : constraints) {
      ConstraintTrack track;
      auto rows = members(spec.subgroup, train);
      if (rows.empty()) {
        throw Error(ErrorCode::EmptySubgroupOnTrain, "subgroup '" + spec.subgroup.name + "' is empty on train");
      }
      track.context = {spec, std::move(rows), {}};
      track.context.km = km_curve(train.observations(track.context.members), train.tau);
      track.position.assign(train.size(), -1);
      for (std::size_t k = 0; k < track.context.members.size(); ++k) {
        track.position[track.context.members[k]] = static_cast<int>(k);
      }
      train_tracks_.push_back(std::move(track));

      // Validation keeps its own KM curve; an empty validation subgroup can
      // never count as satisfied.
      auto vrows = members(spec.subgroup, validation);
      std::optional<ConstraintContext> vctx;
      if (!vrows.empty()) {
        auto km = km_curve(validation.observations(vrows), validation.tau);
        vctx = ConstraintContext{spec, std::move(vrows), std::move(km)};
      }
      val_contexts_.push_back(std::move(vctx));
    }

    const std::size_t m = constraints.size();
    state_.mu.assign(m, 0.0);
    if (graduate_ && config_.mu_init_max > 0.0) {
      // Separate stream: the batch schedule must not depend on m.
      std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                        0x6d75U};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> unif(0.0, config_.mu_init_max);
      for (auto& v : state_.mu) v = unif(rng);
    }
    if (!train_tracks_.empty()) refresh_cache(predict_survival(state_.model, x_train_));
  }

  TrainResult run(const TrainObserver& observer) {
    BatchSchedule schedule(obs_train_.size(), config_.batch_size, config_.seed);
    for (std::uint64_t k = 0; k < config_.schedule_offset; ++k) schedule.next();
    const int steps = config_.steps_per_iteration(obs_train_.size());
    velocity_.assign(state_.model.parameters().size(), 0.0);

    TrainResult result{selected_, 0, state_, false};
    Snapshot best;
    for (int it = 1; it <= config_.outer_iterations; ++it) {
      double loss_sum = 0.0;
      for (int s = 1; s <= steps; ++s) loss_sum += step(schedule.next(), it, s);

      HistoryEntry entry;
      entry.iteration = it;
      entry.train_loss = loss_sum / steps;

      if (!train_tracks_.empty()) {
        refresh_cache(predict_survival(state_.model, x_train_));
        for (const auto& track : train_tracks_) {
          const auto d = distance_with_gradient(track.context.spec.distance, marginal(track), track.context.km);
          entry.penalties.push_back(d.value - track.context.spec.c);
        }
        if (graduate_) dual_update(state_.mu, entry.penalties, config_.eta);
        for (double v : state_.mu) {
          if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "dual variable left the nonnegative orthant");
        }
      }
      entry.mu = state_.mu;
      score_validation(entry);

      const bool better = entry.satisfied > best.satisfied ||
                          (entry.satisfied == best.satisfied && entry.c_index > best.c_index);
      if (better || best.iteration == 0) {
        best = {entry.satisfied, entry.c_index, it};
        selected_ = state_.model;
      }
      entry.selected = best.iteration;
      state_.history.push_back(std::move(entry));
      if (observer) observer(state_, state_.history.back());

      if (it - best.iteration >= config_.patience) {
        result.early_stopped = it < config_.outer_iterations;
        break;
      }
    }
    result.selected = selected_;
    result.selected_iteration = best.iteration;
    result.state = std::move(state_);
    return result;
  }

 private:
  std::vector<double> marginal(const ConstraintTrack& track) const {
    std::vector<double> out(track.sum);
    const double n = static_cast<double>(track.context.members.size());
    for (auto& v : out) v /= n;
    return out;
  }

  void refresh_cache(Matrix survival) {
    cache_ = std::move(survival);
    for (auto& track : train_tracks_) {
      track.sum.assign(tau_ + 1, 0.0);
      for (auto row : track.context.members) {
        const auto s = cache_.row(row);
        for (std::size_t t = 0; t <= tau_; ++t) track.sum[t] += s[t];
      }
    }
  }

  double step(const std::vector<std::size_t>& batch, int it, int s) {
    const auto tape = record(state_.model, x_train_, batch);
    const auto& h = tape.hazards();
    std::vector<Observation> obs(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) obs[b] = obs_train_[batch[b]];

    auto loss = drsa_loss(h, obs, state_.model.epsilon());
    double value = loss.value;
    Matrix cot = std::move(*loss.cotangents);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    if (!graduate_ && mode_ == BaselineMode::DrsaRps && config_.rps_weight != 0.0) {
      const auto rps = rps_loss(h, obs);
      const double w = config_.rps_weight * inv_batch;
      value += w * rps.value;
      auto dst = cot.flat();
      const auto src = rps.cotangents->flat();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
    }

    if (graduate_ && !train_tracks_.empty()) add_constraint_terms(batch, h, cot);

    check_finite(value, it, s, "training loss");
    const auto grad = backward(state_.model, tape, cot);
    auto theta = state_.model.parameters();
    const double lr = config_.inner_lr;
    if (config_.momentum > 0.0) {
      for (std::size_t k = 0; k < theta.size(); ++k) {
        velocity_[k] = config_.momentum * velocity_[k] + grad[k];
        theta[k] -= lr * velocity_[k];
      }
    } else {
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * grad[k];
    }
    for (double v : theta) check_finite(v, it, s, "a model parameter");
    return value;
  }

  // Stochastic estimate of sum_i mu_i dp_i/dh: the subgroup marginals use
  // cached curves refreshed for the batch rows, and each batch member's
  // contribution is scaled by N/|B| so the estimate is unbiased.
  void add_constraint_terms(const std::vector<std::size_t>& batch, const Matrix& h, Matrix& cot) {
    const auto survival = survival_from_hazards(h);
    for (auto& track : train_tracks_) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (track.position[batch[b]] < 0) continue;
        auto cached = cache_.row(batch[b]);
        const auto fresh = survival.row(b);
        for (std::size_t t = 0; t <= tau_; ++t) {
          track.sum[t] += fresh[t] - cached[t];
          cached[t] = fresh[t];
        }
      }
    }
    const double scale_n = static_cast<double>(obs_train_.size()) / static_cast<double>(batch.size());
    std::vector<double> gs(tau_ + 1);
    for (std::size_t i = 0; i < train_tracks_.size(); ++i) {
      if (state_.mu[i] == 0.0) continue;
      const auto& track = train_tracks_[i];
      const auto d = distance_with_gradient(track.context.spec.distance, marginal(track), track.context.km);
      const double w = state_.mu[i] * scale_n / static_cast<double>(track.context.members.size());
      for (std::size_t t = 0; t <= tau_; ++t) gs[t] = w * d.gradient[t];
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (track.position[batch[b]] < 0) continue;
        survival_cotangent_to_hazard(h.row(b), survival.row(b), gs, cot.row(b));
      }
    }
  }

  void score_validation(HistoryEntry& entry) const {
    const auto survival = predict_survival(state_.model, x_val_);
    try {
      entry.c_index = c_index(survival, obs_val_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoComparablePairs) throw;
      entry.c_index = 0.0;
    }
    for (const auto& vctx : val_contexts_) {
      if (!vctx) {
        entry.validation_distance.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double d = std::numeric_limits<double>::quiet_NaN();
      try {
        d = distance(vctx->spec.distance, marginal_survival(survival, vctx->members), vctx->km);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllTimestepsSkipped) throw;
      }
      entry.validation_distance.push_back(d);
      if (d <= vctx->spec.c) ++entry.satisfied;
    }
  }

  TrainerConfig config_;
  bool graduate_;
  BaselineMode mode_;
  TrainerState state_;
  HazardModel selected_;
  Matrix x_train_;
  std::vector<Observation> obs_train_;
  Matrix x_val_;
  std::vector<Observation> obs_val_;
  std::size_t tau_;
  std::vector<ConstraintTrack> train_tracks_;
  std::vector<std::optional<ConstraintContext>> val_contexts_;
  Matrix cache_;
  std::vector<double> velocity_;
};

}  // namespace

TrainResult primal_dual_train(const HazardModel& init, const DiscreteDataset& train,
                              const DiscreteDataset& validation, const std::vector<ConstraintSpec>& constraints,
                              const TrainerConfig& config, const TrainObserver& observer) {
  Loop loop(init, train, validation, constraints, true, BaselineMode::Drsa, config);
  return loop.run(observer);
}

TrainResult baseline_train(const HazardModel& init, const DiscreteDataset& train, const DiscreteDataset& validation,
                           BaselineMode mode, const TrainerConfig& config, const TrainObserver& observer) {
  Loop loop(init, train, validation, {}, false, mode, config);
  return loop.run(observer);
}

MuTrajectory mu_trajectory_probe(const std::vector<HistoryEntry>& history) {
  MuTrajectory out;
  for (const auto& e : history) {
    out.iteration.push_back(e.iteration);
    out.mu.push_back(e.mu);
    out.penalty.push_back(e.penalties);
  }
  return out;
}

void write_mu_trajectory(const MuTrajectory& trajectory, const std::vector<std::string>& names, std::ostream& out) {
  out << "iteration";
  for (const auto& n : names) out << ",mu[" << n << ']';
  for (const auto& n : names) out << ",p[" << n << ']';
  out << '\n';
  for (std::size_t r = 0; r < trajectory.iteration.size(); ++r) {
    out << trajectory.iteration[r];
    for (double v : trajectory.mu[r]) out << ',' << detail::format_double(v);
    for (double v : trajectory.penalty[r]) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

void write_history(const std::vector<HistoryEntry>& history, std::ostream& out) {
  out << "iteration,train_loss,validation_satisfied,validation_c_index,selected\n";
  for (const auto& e : history) {
    out << e.iteration << ',' << detail::format_double(e.train_loss) << ',' << e.satisfied << ','
        << detail::format_double(e.c_index) << ',' << e.selected << '\n';
  }
}

}  // namespace mcsurv
