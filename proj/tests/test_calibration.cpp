#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mcsurv/calibration.hpp"
#include "mcsurv/losses.hpp"
#include "test_support.hpp"

namespace mcsurv {
namespace {

using testing::code_of;

SurvivalCurve curve(std::vector<double> values) {
  SurvivalCurve c;
  c.values = std::move(values);
  return c;
}

SurvivalCurve with_variance(std::vector<double> values, std::vector<double> variance) {
  auto c = curve(std::move(values));
  c.variance = std::move(variance);
  c.variance_flag.assign(c.values.size(), VarianceFlag::Valid);
  c.variance_flag[0] = VarianceFlag::BeforeFirstEvent;
  return c;
}

SurvivalCurve random_curve(std::mt19937_64& rng, int tau) {
  std::uniform_real_distribution<double> u(0.0, 0.4);
  std::vector<double> v{1.0};
  for (int t = 1; t <= tau; ++t) v.push_back(v.back() * (1.0 - u(rng)));
  return curve(v);
}

TEST(L2, HandExamples) {
  EXPECT_NEAR(l2_distance(curve({1.0, 0.9, 0.5}), curve({1.0, 0.8, 0.3})), 0.025, 1e-15);
  EXPECT_EQ(l2_distance(curve({1.0, 0.7, 0.2}), curve({1.0, 0.7, 0.2})), 0.0);
  EXPECT_NEAR(l2_distance(curve({1.0, 0.75, 0.45, 0.15}), curve({1.0, 0.7, 0.4, 0.1})), 0.0025, 1e-15);
  EXPECT_EQ(code_of([] { l2_distance(curve({1.0, 0.5}), curve({1.0, 0.5, 0.2})); }), ErrorCode::LengthMismatch);
}

TEST(L2, SymmetricAndIgnoresTimeZero) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    auto a = random_curve(rng, 6), b = random_curve(rng, 6);
    EXPECT_EQ(l2_distance(a, b), l2_distance(b, a));
    EXPECT_GE(l2_distance(a, b), 0.0);
    a.values[0] = 0.3;
    EXPECT_EQ(l2_distance(a, b), l2_distance(b, a));
  }
}

TEST(VarianceAdjusted, HandExamples) {
  const auto ref = with_variance({1.0, 0.5}, {0.0, 0.0025});
  EXPECT_DOUBLE_EQ(variance_adjusted_distance(curve({1.0, 0.6}), ref), 2.0);
  EXPECT_EQ(variance_adjusted_distance(curve({1.0, 0.5}), ref), 0.0);
  const auto flat = with_variance({1.0, 0.5, 0.2}, {0.0, 0.0, 0.0});
  EXPECT_EQ(code_of([&] { variance_adjusted_distance(curve({1.0, 0.6, 0.1}), flat); }),
            ErrorCode::AllTimestepsSkipped);
}

TEST(VarianceAdjusted, SkipsFlaggedTimesteps) {
  auto ref = with_variance({1.0, 0.5, 0.2}, {0.0, 0.01, 0.01});
  ref.variance_flag[2] = VarianceFlag::Undefined;
  // t=2 would give 0.5/0.1 = 5 but is flagged.
  EXPECT_NEAR(variance_adjusted_distance(curve({1.0, 0.6, 0.7}), ref), 1.0, 1e-12);
}

TEST(VarianceAdjusted, SubgradientOnFirstArgmax) {
  const auto ref = with_variance({1.0, 0.5, 0.3, 0.2}, {0.0, 0.01, 0.01, 0.04});
  // z = 1 at t=1 and t=2 (tie), 0.5 at t=3.
  const std::vector<double> pred{1.0, 0.6, 0.2, 0.3};
  const auto g = distance_with_gradient(DistanceKind::VarianceAdjusted, pred, ref);
  EXPECT_NEAR(g.value, 1.0, 1e-12);
  EXPECT_NEAR(g.gradient[1], 10.0, 1e-12);
  EXPECT_EQ(g.gradient[0], 0.0);
  EXPECT_EQ(g.gradient[2], 0.0);
  EXPECT_EQ(g.gradient[3], 0.0);
}

TEST(L2, GradientIsScaledDifference) {
  const auto ref = curve({1.0, 0.8, 0.3});
  const std::vector<double> pred{1.0, 0.9, 0.5};
  const auto g = distance_with_gradient(DistanceKind::L2, pred, ref);
  EXPECT_NEAR(g.value, 0.025, 1e-15);
  EXPECT_EQ(g.gradient[0], 0.0);
  EXPECT_NEAR(g.gradient[1], 2.0 / 2.0 * 0.1, 1e-15);
  EXPECT_NEAR(g.gradient[2], 2.0 / 2.0 * 0.2, 1e-15);
}

TEST(Ece, HandExample) {
  EXPECT_NEAR(ece(curve({1.0, 0.55, 0.25}), curve({1.0, 0.5, 0.4}), 2), 0.2 / 3.0, 1e-12);
  EXPECT_NEAR(ece(curve({1.0, 0.55, 0.25}), curve({1.0, 0.5, 0.4}), 2), 0.0667, 5e-5);
  EXPECT_EQ(code_of([] { ece(curve({1.0, 0.5}), curve({1.0}), 2); }), ErrorCode::LengthMismatch);
}

TEST(Ece, Properties) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = random_curve(rng, 8);
    const auto b = random_curve(rng, 8);
    EXPECT_EQ(ece(a, a), 0.0);
    const double e = ece(a, b);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    const auto counts = ece_bin_counts(a, 10);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), 9u);
    // Uniform offset: reference sits d below the prediction everywhere.
    const double d = 0.05;
    auto shifted = a;
    for (double& v : shifted.values) v -= d;
    EXPECT_NEAR(ece(a, shifted), d, 1e-12);
  }
}

TEST(Ece, ZeroJoinsFirstBin) {
  const auto counts = ece_bin_counts(curve({1.0, 0.0, 0.0}), 4);
  EXPECT_EQ(counts, (std::vector<std::size_t>{2, 0, 0, 1}));
}

struct Fixture {
  DiscreteDataset data;
  Matrix x;
  std::vector<ConstraintContext> contexts;
};

Fixture make_fixture(std::mt19937_64& rng, std::size_t n, int tau, DistanceKind kind, double c = 0.01) {
  Fixture f;
  f.data = testing::grouped_dataset(rng, n, tau);
  f.x = design_matrix(f.data);
  SubgroupSpec a{"g=a", SubgroupKind::Manual, {{"g", Condition::Kind::Equals, {0.0}}}};
  SubgroupSpec b{"g=b", SubgroupKind::Manual, {{"g", Condition::Kind::Equals, {1.0}}}};
  f.contexts = prepare_constraints(build_constraint_set({a, b}, {}, c, kind), f.data);
  return f;
}

TEST(Penalty, ZeroDistanceGivesMinusSlack) {
  std::mt19937_64 rng(3);
  auto f = make_fixture(rng, 20, 4, DistanceKind::L2);
  const auto model = init_model({Architecture::LinearTime, model_input_dim(f.data.features), 4, 1, 1e-6}, 1);
  auto ctx = f.contexts[0];
  ctx.km = marginal_survival(model, f.x, ctx.members);
  const auto p = constraint_penalty(model, f.x, ctx);
  EXPECT_NEAR(p.distance, 0.0, 1e-15);
  EXPECT_NEAR(p.value, -0.01, 1e-15);
}

TEST(Penalty, MonotoneInSlack) {
  std::mt19937_64 rng(4);
  auto f = make_fixture(rng, 30, 5, DistanceKind::L2);
  const auto model = init_model({Architecture::MlpTime, model_input_dim(f.data.features), 5, 4, 1e-6}, 2);
  auto ctx = f.contexts[1];
  const double base = constraint_penalty(model, f.x, ctx).value;
  ctx.spec.c += 0.125;
  EXPECT_DOUBLE_EQ(constraint_penalty(model, f.x, ctx).value, base - 0.125);
}

TEST(Penalty, EmptySubgroup) {
  std::mt19937_64 rng(5);
  const auto data = testing::grouped_dataset(rng, 10, 3);
  SubgroupSpec none{"none", SubgroupKind::Manual, {{"x0", Condition::Kind::Interval, {}, 100.0, 200.0}}};
  EXPECT_EQ(code_of([&] { prepare_constraints(build_constraint_set({none}, {}, 0.1, DistanceKind::L2), data); }),
            ErrorCode::EmptySubgroup);
}

TEST(Penalty, L2CotangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  auto f = make_fixture(rng, 12, 5, DistanceKind::L2);
  const auto model = init_model({Architecture::MlpTime, model_input_dim(f.data.features), 5, 4, 1e-6}, 3);
  const auto h = [&] {
    Matrix out(f.data.size(), 5);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      const auto row = model.hazards(f.x.row(i));
      std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
  }();
  for (const auto& ctx : f.contexts) {
    const auto p = constraint_penalty(h, survival_from_hazards(h), ctx);
    std::vector<double> analytic(h.rows() * h.cols(), 0.0);
    for (std::size_t k = 0; k < ctx.members.size(); ++k) {
      for (std::size_t t = 0; t < h.cols(); ++t) analytic[ctx.members[k] * h.cols() + t] = p.cotangents(k, t);
    }
    std::vector<double> flat(h.flat().begin(), h.flat().end());
    const auto numeric = testing::numeric_gradient(flat, [&](const std::vector<double>& v) {
      Matrix m(h.rows(), h.cols());
      std::copy(v.begin(), v.end(), m.flat().begin());
      return constraint_penalty(m, survival_from_hazards(m), ctx).value;
    });
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-4) << ctx.spec.subgroup.name;
  }
}

TEST(Penalty, VarianceAdjustedCotangentsLiveOnOneTimestep) {
  std::mt19937_64 rng(7);
  auto f = make_fixture(rng, 40, 5, DistanceKind::VarianceAdjusted);
  const auto model = init_model({Architecture::MlpTime, model_input_dim(f.data.features), 5, 4, 1e-6}, 4);
  const auto s = predict_survival(model, f.x);
  for (const auto& ctx : f.contexts) {
    const auto marginal = marginal_survival(s, ctx.members);
    const auto g = distance_with_gradient(DistanceKind::VarianceAdjusted, marginal.values, ctx.km);
    EXPECT_EQ(std::count_if(g.gradient.begin(), g.gradient.end(), [](double v) { return v != 0.0; }), 1);
  }
}

TEST(Lagrangian, MatchesFiniteDifferencesForEveryArchitecture) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mu_dist(0.0, 5.0);
  for (auto arch : {Architecture::LinearTime, Architecture::MlpTime, Architecture::Recurrent}) {
    for (int rep = 0; rep < 10; ++rep) {
      auto f = make_fixture(rng, 16, 5, DistanceKind::L2);
      auto model = init_model({arch, model_input_dim(f.data.features), 5, 4, 1e-6}, rng());
      const auto obs = f.data.observations();
      std::vector<double> mu(f.contexts.size());
      for (double& m : mu) m = mu_dist(rng);
      std::vector<double> analytic;
      lagrangian(model, f.x, obs, f.contexts, mu, &analytic);
      const std::vector<double> theta(model.parameters().begin(), model.parameters().end());
      const auto numeric = testing::numeric_gradient(theta, [&](const std::vector<double>& th) {
        return lagrangian(HazardModel(model.shape(), th), f.x, obs, f.contexts, mu);
      });
      EXPECT_LT(testing::relative_error(analytic, numeric), 1e-4) << to_string(arch);
    }
  }
}

TEST(Lagrangian, ZeroMultipliersReduceToDrsa) {
  std::mt19937_64 rng(9);
  auto f = make_fixture(rng, 16, 4, DistanceKind::L2);
  const auto model = init_model({Architecture::MlpTime, model_input_dim(f.data.features), 4, 4, 1e-6}, 5);
  const std::vector<double> mu(f.contexts.size(), 0.0);
  EXPECT_NEAR(lagrangian(model, f.x, f.data.observations(), f.contexts, mu), drsa_loss(model, f.data).value, 1e-12);
}

}  // namespace
}  // namespace mcsurv
