#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mcsurv/estimators.hpp"
#include "mcsurv/matrix.hpp"

namespace mcsurv {

/// Network families mapping (features, timestep) to a hazard.
///  - LinearTime: z_t = w.x + b_t (shared weights, one bias per step).
///  - MlpTime: one tanh hidden layer over [x, t/tau].
///  - Recurrent: chain of gated recurrent cells (update gate + tanh
///    candidate) with shared weights, one cell per step, fed [x, t/tau].
enum class Architecture { LinearTime, MlpTime, Recurrent };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& text);

struct ModelShape {
  Architecture architecture = Architecture::MlpTime;
  std::size_t input_dim = 1;
  int tau = 1;
  std::size_t hidden = 50;
  double epsilon = 1e-6;

  std::size_t parameter_count() const;
  void validate() const;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Discrete-time hazard model. Every emitted hazard is clamped to
/// [epsilon, 1 - epsilon]; the clamp is flat, so gradients vanish there.
class HazardModel {
 public:
  HazardModel(ModelShape shape, std::vector<double> parameters);

  const ModelShape& shape() const noexcept { return shape_; }
  Architecture architecture() const noexcept { return shape_.architecture; }
  std::size_t input_dim() const noexcept { return shape_.input_dim; }
  int tau() const noexcept { return shape_.tau; }
  double epsilon() const noexcept { return shape_.epsilon; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  /// h_1..h_tau for one feature vector.
  std::vector<double> hazards(std::span<const double> x) const;

  /// S(0..tau) with S(0) = 1 and S(t) = prod_{l <= t} (1 - h_l).
  SurvivalCurve survival_curve(std::span<const double> x) const;

  friend bool operator==(const HazardModel&, const HazardModel&) = default;

 private:
  ModelShape shape_;
  std::vector<double> params_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
HazardModel init_model(const ModelShape& shape, std::uint64_t seed);

/// Forward intermediates for a batch of rows, enough to pull any
/// hazard-space cotangent back to the parameters.
class GradientTape {
 public:
  std::size_t batch_size() const noexcept { return hazards_.rows(); }
  /// batch x tau hazards (clamped).
  const Matrix& hazards() const noexcept { return hazards_; }

 private:
  friend GradientTape record(const HazardModel&, const Matrix&, std::span<const std::size_t>);
  friend std::vector<double> backward(const HazardModel&, const GradientTape&, const Matrix&);

  Matrix inputs_;   // batch x input_dim copy of the rows
  Matrix hazards_;  // batch x tau
  Matrix sigmoid_;  // batch x tau, pre-clamp
  // Architecture-specific activations, batch x (tau * width).
  Matrix hidden_;
  Matrix gate_;
  Matrix candidate_;
};

/// Runs the model on `rows` of `inputs` and keeps what backward() needs.
GradientTape record(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> rows);

/// Reverse accumulation: returns sum over (example, t) of
/// cotangent(example, t) * d h_t(example) / d theta, in a fixed order.
std::vector<double> backward(const HazardModel& model, const GradientTape& tape, const Matrix& cotangents);

/// Convenience wrapper: forward, ask `cotangent_fn` for dL/dh given the
/// batch hazards, pull back.
std::vector<double> grad_scalar(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> rows,
                                const std::function<Matrix(const Matrix& hazards)>& cotangent_fn);

/// Survival matrix (rows x tau+1) from a hazard matrix (rows x tau).
Matrix survival_from_hazards(const Matrix& hazards);

/// Survival curves for every row of `inputs` (rows x tau+1).
Matrix predict_survival(const HazardModel& model, const Matrix& inputs);

/// Pointwise mean of the member curves. Throws EmptySubgroup.
SurvivalCurve marginal_survival(const Matrix& survival, std::span<const std::size_t> members);
SurvivalCurve marginal_survival(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> members);

/// Pulls a cotangent on S(0..tau) back to hazards h_1..h_tau for one
/// example: dL/dh_l = -sum_{t >= l} g_t S(t) / (1 - h_l).
void survival_cotangent_to_hazard(std::span<const double> hazards, std::span<const double> survival,
                                  std::span<const double> survival_cotangent, std::span<double> hazard_cotangent);

void serialize(const HazardModel& model, std::ostream& out);
HazardModel deserialize(std::istream& in);
void save_model(const HazardModel& model, const std::string& path);
HazardModel load_model(const std::string& path);

}  // namespace mcsurv
