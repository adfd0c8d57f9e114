#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mcsurv/cli.hpp"
#include "mcsurv/losses.hpp"
#include "test_support.hpp"

namespace mcsurv {
namespace {

using testing::code_of;

Matrix constant_hazards(std::size_t rows, int tau, double h) { return Matrix(rows, static_cast<std::size_t>(tau), h); }

Matrix random_hazards(std::mt19937_64& rng, std::size_t rows, int tau) {
  std::uniform_real_distribution<double> u(0.02, 0.6);
  Matrix h(rows, static_cast<std::size_t>(tau));
  for (double& v : h.flat()) v = u(rng);
  return h;
}

std::vector<Observation> random_obs(std::mt19937_64& rng, std::size_t n, int tau) {
  return testing::random_dataset(rng, n, 0, tau, 0.4).observations();
}

// Direct evaluation of the per-record likelihood terms with plain logs.
double drsa_oracle(const Matrix& h, std::span<const Observation> batch) {
  const int tau = static_cast<int>(h.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int t = batch[i].time;
    double before = 0.0;
    for (int l = 1; l < t; ++l) before -= std::log(1.0 - h(i, l - 1));
    if (batch[i].event) {
      double prod = 1.0;
      for (int l = 1; l < tau; ++l) prod *= 1.0 - h(i, l - 1);
      total += -std::log(h(i, t - 1)) + before - std::log(1.0 - prod);
    } else {
      total += before;
    }
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> hazard_numeric_gradient(const Matrix& h, const std::function<double(const Matrix&)>& f) {
  std::vector<double> flat(h.flat().begin(), h.flat().end());
  return testing::numeric_gradient(flat, [&](const std::vector<double>& v) {
    Matrix m(h.rows(), h.cols());
    std::copy(v.begin(), v.end(), m.flat().begin());
    return f(m);
  });
}

TEST(Drsa, HandExamples) {
  const std::vector<Observation> uncensored{{1, true}};
  EXPECT_NEAR(drsa_loss(constant_hazards(1, 2, 0.5), uncensored).value, 2.0 * std::log(2.0), 1e-12);
  const std::vector<Observation> censored{{1, false}};
  EXPECT_EQ(drsa_loss(constant_hazards(1, 3, 0.3), censored).value, 0.0);
}

TEST(Drsa, MatchesDirectFormula) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto h = random_hazards(rng, 8, 6);
    const auto batch = random_obs(rng, 8, 6);
    EXPECT_NEAR(drsa_loss(h, batch).value, drsa_oracle(h, batch), 1e-12);
  }
}

TEST(Drsa, SingleStepHorizonIsFinite) {
  const std::vector<Observation> batch{{1, true}};
  const auto loss = drsa_loss(constant_hazards(1, 1, 0.4), batch);
  EXPECT_TRUE(std::isfinite(loss.value));
  EXPECT_NEAR(loss.value, -std::log(0.4) - std::log(1e-6), 1e-9);
}

TEST(Drsa, CotangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = random_hazards(rng, 6, 5);
    const auto batch = random_obs(rng, 6, 5);
    const auto loss = drsa_loss(h, batch);
    ASSERT_TRUE(loss.cotangents.has_value());
    const std::vector<double> analytic(loss.cotangents->flat().begin(), loss.cotangents->flat().end());
    const auto numeric = hazard_numeric_gradient(h, [&](const Matrix& m) { return drsa_loss(m, batch).value; });
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-6);
  }
}

TEST(Drsa, FiniteForClampedModelsAndDescends) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  const auto ds = testing::random_dataset(rng, 20, 2, 5);
  auto model = init_model({Architecture::MlpTime, 2, 5, 4, 1e-6}, 3);
  for (double& p : model.parameters()) p = coin(rng) ? 1e3 : -1e3;
  EXPECT_TRUE(std::isfinite(drsa_loss(model, ds).value));

  model = init_model({Architecture::MlpTime, 2, 5, 4, 1e-6}, 3);
  const auto x = design_matrix(ds);
  const auto rows = testing::iota_rows(ds.size());
  const auto obs = ds.observations();
  const auto grad = grad_scalar(model, x, rows, [&](const Matrix& h) { return *drsa_loss(h, obs).cotangents; });
  const double before = drsa_loss(model, ds).value;
  bool decreased = false;
  for (double step : {1e-1, 1e-2, 1e-3, 1e-4}) {
    auto moved = model;
    for (std::size_t k = 0; k < grad.size(); ++k) moved.parameters()[k] -= step * grad[k];
    decreased = decreased || drsa_loss(moved, ds).value < before;
  }
  EXPECT_TRUE(decreased);
}

TEST(Rps, HandExamples) {
  const std::vector<Observation> one{{2, true}};
  Matrix s(1, 3);
  s(0, 0) = 1.0;
  s(0, 1) = 0.5;
  s(0, 2) = 0.25;
  EXPECT_NEAR(rps_score(s, one), 0.3125, 1e-15);
  // Step prediction for an uncensored record scores zero.
  Matrix step(1, 4);
  step(0, 0) = 1.0;
  step(0, 1) = 1.0;
  const std::vector<Observation> at2{{2, true}};
  EXPECT_EQ(rps_score(step, at2), 0.0);
}

TEST(Rps, CounterexampleTableIsZero) {
  const auto ds = counterexample_dataset(CounterexampleTable::Rps);
  EXPECT_EQ(rps_score(cli::counterexample_predictions(CounterexampleTable::Rps), ds.observations()), 0.0);
}

TEST(Rps, NonNegativeAndZeroOnlyForSteps) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const auto h = random_hazards(rng, 5, 4);
    const auto batch = random_obs(rng, 5, 4);
    EXPECT_GT(rps_loss(h, batch).value, 0.0);
    EXPECT_NEAR(rps_loss(h, batch).value, rps_score(survival_from_hazards(h), batch), 1e-12);
  }
}

TEST(Rps, CotangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = random_hazards(rng, 6, 5);
    const auto batch = random_obs(rng, 6, 5);
    const auto loss = rps_loss(h, batch);
    ASSERT_TRUE(loss.cotangents.has_value());
    const std::vector<double> analytic(loss.cotangents->flat().begin(), loss.cotangents->flat().end());
    const auto numeric = hazard_numeric_gradient(h, [&](const Matrix& m) { return rps_loss(m, batch).value; });
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-6);
  }
}

TEST(ProbabilityBin, HalfOpenIntervals) {
  EXPECT_EQ(probability_bin(0.0, 5), 1);
  EXPECT_EQ(probability_bin(0.2, 5), 1);
  EXPECT_EQ(probability_bin(0.2000001, 5), 2);
  EXPECT_EQ(probability_bin(0.85, 5), 5);
  EXPECT_EQ(probability_bin(1.0, 5), 5);
  EXPECT_EQ(probability_bin(0.6, 5), 3);
}

Matrix survival_with_failure_at_time(std::span<const Observation> records, const std::vector<double>& f, int tau) {
  Matrix s(records.size(), static_cast<std::size_t>(tau) + 1, 1.0);
  for (std::size_t i = 0; i < records.size(); ++i) s(i, records[i].time) = 1.0 - f[i];
  return s;
}

TEST(DCal, HandExamples) {
  const auto ds = counterexample_dataset(CounterexampleTable::DCal);
  const auto obs = ds.observations();
  const auto uniform = survival_with_failure_at_time(obs, {0.85, 0.65, 0.45, 0.25, 0.05}, 5);
  EXPECT_NEAR(dcal_metric(uniform, obs, {5}), 0.0, 1e-12);
  const auto lumped = survival_with_failure_at_time(obs, {0.1, 0.15, 0.05, 0.2, 0.01}, 5);
  EXPECT_NEAR(dcal_metric(lumped, obs, {5}), 0.8, 1e-12);
  EXPECT_NEAR(dcal_metric(cli::counterexample_predictions(CounterexampleTable::DCal), obs, {5}), 0.0, 1e-12);
}

TEST(DCal, CensoredMassFollowsPrintedFormula) {
  // F = 0.3 with M = 5: containing interval (0.2, 0.4] gets (0.4 - 0.3)/0.7,
  // each of the three intervals above gets 0.2/0.3.
  const std::vector<Observation> one{{1, false}};
  Matrix s(1, 2, 1.0);
  s(0, 1) = 0.7;
  const double g2 = 0.1 / 0.7, g_above = 0.2 / 0.3;
  const double expected =
      0.2 * 0.2 + (g2 - 0.2) * (g2 - 0.2) + 3.0 * (g_above - 0.2) * (g_above - 0.2);
  EXPECT_NEAR(dcal_metric(s, one, {5}), expected, 1e-12);
}

TEST(DCal, DegenerateDenominatorWithoutClamp) {
  const std::vector<Observation> one{{1, false}};
  Matrix s(1, 2, 1.0);
  s(0, 1) = 0.0;  // F = 1
  EXPECT_TRUE(std::isfinite(dcal_metric(s, one, {5, 1e-6, true})));
  EXPECT_EQ(code_of([&] { dcal_metric(s, one, {5, 1e-6, false}); }), ErrorCode::DegenerateDenominator);
}

TEST(DCal, NonNegativeAndMassConserved) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Observation> obs(30);
    std::vector<double> f(30);
    for (auto& o : obs) o = {1 + static_cast<int>(u(rng) * 4), true};
    for (double& v : f) v = u(rng);
    const auto s = survival_with_failure_at_time(obs, f, 5);
    const double d = dcal_metric(s, obs, {7});
    EXPECT_GE(d, 0.0);
    // With unit mass per record, the per-bin proportions reconstruct d.
    std::vector<double> counts(7, 0.0);
    for (double v : f) counts[probability_bin(v, 7) - 1] += 1.0 / 30.0;
    double sum = 0.0, oracle = 0.0;
    for (double c : counts) {
      sum += c;
      oracle += (c - 1.0 / 7) * (c - 1.0 / 7);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(d, oracle, 1e-12);
  }
}

TEST(Brier, HandExample) {
  const std::vector<Observation> one{{1, true}};
  Matrix s(1, 3, 1.0);
  s(0, 1) = 0.3;
  SurvivalCurve g;
  g.values.assign(3, 1.0);
  const auto b = brier_score(s, one, 1, g);
  EXPECT_NEAR(b.value, 0.09, 1e-15);
  EXPECT_FALSE(b.clamped);
}

TEST(Brier, CounterexampleStepPredictionsScoreZero) {
  const auto ds = counterexample_dataset(CounterexampleTable::Brier);
  const auto obs = ds.observations();
  const auto s = cli::counterexample_predictions(CounterexampleTable::Brier);
  const auto g = censoring_km(obs, 5);
  for (int t = 1; t <= 5; ++t) EXPECT_NEAR(brier_score(s, obs, t, g).value, 0.0, 1e-12);
}

TEST(Brier, PerfectStepsOnUncensoredData) {
  std::mt19937_64 rng(7);
  const auto obs = testing::random_dataset(rng, 20, 0, 6, 0.0).observations();
  Matrix s(obs.size(), 7, 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (int t = 0; t < obs[i].time; ++t) s(i, t) = 1.0;
  }
  const auto g = censoring_km(obs, 6);
  for (int t = 1; t <= 6; ++t) EXPECT_EQ(brier_score(s, obs, t, g).value, 0.0);
  EXPECT_EQ(integrated_brier(s, obs, g).value, 0.0);
}

TEST(Brier, NonNegativePermutationInvariantAndFlagged) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    auto obs = random_obs(rng, 15, 5);
    const auto s = survival_from_hazards(random_hazards(rng, 15, 5));
    const auto g = censoring_km(obs, 5);
    std::vector<std::size_t> perm = testing::iota_rows(15);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix s2(15, 6);
    std::vector<Observation> obs2(15);
    for (std::size_t i = 0; i < 15; ++i) {
      std::copy(s.row(perm[i]).begin(), s.row(perm[i]).end(), s2.row(i).begin());
      obs2[i] = obs[perm[i]];
    }
    for (int t = 1; t <= 5; ++t) {
      const auto a = brier_score(s, obs, t, g);
      EXPECT_GE(a.value, 0.0);
      EXPECT_NEAR(a.value, brier_score(s2, obs2, t, g).value, 1e-12);
    }
  }
  // A censoring curve that hits zero has to be floored.
  const std::vector<Observation> gone{{1, true}, {3, false}};
  const auto s = survival_from_hazards(constant_hazards(2, 3, 0.3));
  SurvivalCurve g;
  g.values = {1.0, 0.5, 0.0, 0.0};
  EXPECT_TRUE(brier_score(s, gone, 2, g).clamped);
}

}  // namespace
}  // namespace mcsurv
