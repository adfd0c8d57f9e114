#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcsurv/calibration.hpp"
#include "mcsurv/data.hpp"
#include "mcsurv/hazard_model.hpp"
#include "mcsurv/subgroups.hpp"

namespace mcsurv {

struct TrainerConfig {
  /// Dual step size.
  double eta = 0.01;
  /// Outer iterations (dual updates / validation checkpoints).
  int outer_iterations = 3000;
  /// Stop once the selected snapshot has not changed for this many
  /// consecutive outer iterations.
  int patience = 500;
  /// SGD steps per outer iteration; 0 means one epoch over the train set.
  int inner_steps = 0;
  double inner_lr = 0.01;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  /// Dual variables start uniform on [0, mu_init_max].
  double mu_init_max = 1.0;
  /// Weight of the RPS term in the drsa_rps baseline.
  double rps_weight = 1.0;
  /// Number of minibatches to skip in the batch schedule before training;
  /// lets a run resume the schedule of another one.
  std::uint64_t schedule_offset = 0;

  void validate() const;
  /// Effective SGD steps per outer iteration for `n` training records.
  int steps_per_iteration(std::size_t n) const;
};

enum class BaselineMode { Drsa, DrsaRps };

std::string to_string(BaselineMode mode);

struct HistoryEntry {
  int iteration = 0;                  // 1-based outer iteration
  std::size_t satisfied = 0;          // validation constraints met
  double c_index = 0.0;               // validation C-index (0 if undefined)
  double train_loss = 0.0;            // mean minibatch loss over the inner steps
  std::vector<double> mu;             // after this iteration's dual update
  std::vector<double> penalties;      // full-train p_i that drove the update
  std::vector<double> validation_distance;
  int selected = 0;                   // snapshot selected so far
};

struct TrainerState {
  HazardModel model;
  std::vector<double> mu;
  std::vector<HistoryEntry> history;
};

struct TrainResult {
  HazardModel selected;
  int selected_iteration = 0;
  TrainerState state;
  bool early_stopped = false;
};

/// Called after every outer iteration with the live state and its entry.
using TrainObserver = std::function<void(const TrainerState&, const HistoryEntry&)>;

/// Minibatch order: a fresh permutation of 0..n-1 every epoch, consumed
/// batch_size rows at a time (the last batch of an epoch may be short).
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

/// mu_i <- max(0, mu_i + eta * p_i).
void dual_update(std::vector<double>& mu, std::span<const double> penalties, double eta);

/// Constrained training by alternating minibatch SGD on the Lagrangian and
/// projected dual ascent. Snapshots are ranked by (validation constraints
/// satisfied, validation C-index, earliest iteration).
/// Throws EmptySubgroupOnTrain, NonFiniteLoss.
TrainResult primal_dual_train(const HazardModel& init, const DiscreteDataset& train,
                              const DiscreteDataset& validation, const std::vector<ConstraintSpec>& constraints,
                              const TrainerConfig& config, const TrainObserver& observer = {});

/// Unconstrained minibatch SGD on mean DRSA (+ rps_weight * RPS / batch in
/// DrsaRps mode), selected by validation C-index.
TrainResult baseline_train(const HazardModel& init, const DiscreteDataset& train, const DiscreteDataset& validation,
                           BaselineMode mode, const TrainerConfig& config, const TrainObserver& observer = {});

/// Index into `history` of the lexicographically best snapshot.
std::size_t select_model(const std::vector<HistoryEntry>& history);

/// Per-iteration dual variables and penalties, one row per outer iteration.
struct MuTrajectory {
  std::vector<int> iteration;
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> penalty;
};

MuTrajectory mu_trajectory_probe(const std::vector<HistoryEntry>& history);
void write_mu_trajectory(const MuTrajectory& trajectory, const std::vector<std::string>& names, std::ostream& out);
void write_history(const std::vector<HistoryEntry>& history, std::ostream& out);

}  // namespace mcsurv
