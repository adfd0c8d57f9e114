#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "mcsurv/subgroups.hpp"
#include "test_support.hpp"

namespace mcsurv {
namespace {

using testing::code_of;

DiscreteDataset categorical_dataset(std::mt19937_64& rng, std::size_t n, std::vector<std::size_t> cardinality) {
  DiscreteDataset ds;
  ds.tau = 4;
  for (std::size_t j = 0; j < cardinality.size(); ++j) {
    FeatureInfo f{"c" + std::to_string(j), true, {}};
    for (std::size_t v = 0; v < cardinality[j]; ++v) f.labels.push_back("v" + std::to_string(v));
    ds.features.push_back(f);
  }
  ds.features.push_back({"age", false, {}});
  std::uniform_real_distribution<double> age(20.0, 80.0);
  for (std::size_t i = 0; i < n; ++i) {
    SurvivalRecord r;
    for (auto k : cardinality) r.features.push_back(static_cast<double>(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)));
    r.features.push_back(age(rng));
    r.time = 1;
    r.event = true;
    ds.records.push_back(r);
  }
  return ds;
}

Condition equals(const std::string& feature, double code) { return {feature, Condition::Kind::Equals, {code}}; }

TEST(Membership, HandMasks) {
  DiscreteDataset ds;
  ds.tau = 2;
  ds.features = {{"sex", true, {"f", "m"}}, {"age", false, {}}};
  ds.records = {{{0, 30}, 1, true}, {{1, 45}, 1, true}, {{1, 38}, 2, false}};
  EXPECT_EQ(membership(full_population(), ds), (std::vector<bool>{true, true, true}));
  EXPECT_EQ(membership({"m", SubgroupKind::Manual, {equals("sex", 1)}}, ds), (std::vector<bool>{false, true, true}));
  const SubgroupSpec band{"35-40", SubgroupKind::Manual, {{"age", Condition::Kind::Interval, {}, 35, 40}}};
  EXPECT_EQ(membership(band, ds), (std::vector<bool>{false, false, true}));
  const SubgroupSpec empty{"none", SubgroupKind::Manual, {{"age", Condition::Kind::Interval, {}, 90, 99}}};
  EXPECT_EQ(membership(empty, ds), (std::vector<bool>{false, false, false}));
  const SubgroupSpec both{"either", SubgroupKind::Manual, {{"sex", Condition::Kind::InSet, {0, 1}}}};
  EXPECT_EQ(members(both, ds), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(code_of([&] { membership({"bad", SubgroupKind::Manual, {equals("smoker", 1)}}, ds); }),
            ErrorCode::UnknownFeature);
}

TEST(AutoSelect, BinarySplitTakesLargerFirst) {
  DiscreteDataset ds;
  ds.tau = 2;
  ds.features = {{"b", true, {"no", "yes"}}};
  for (int i = 0; i < 100; ++i) ds.records.push_back({{i < 40 ? 1.0 : 0.0}, 1, true});
  const auto picked = auto_select(ds, {10, 0.8, 3});
  ASSERT_EQ(picked.size(), 2u);
  EXPECT_EQ(picked[0].name, "b=no");
  EXPECT_EQ(picked[1].name, "b=yes");
  EXPECT_EQ(picked[0].kind, SubgroupKind::Auto);
  EXPECT_TRUE(auto_select(ds, {1000, 0.8, 3}).empty());
}

TEST(AutoSelect, IdenticalCandidateRejected) {
  DiscreteDataset ds;
  ds.tau = 2;
  ds.features = {{"a", true, {"x", "y"}}, {"b", true, {"p", "q"}}};
  // a and b are the same split, so b=... duplicates a=... exactly.
  for (int i = 0; i < 50; ++i) ds.records.push_back({{i < 30 ? 0.0 : 1.0, i < 30 ? 0.0 : 1.0}, 1, true});
  const auto picked = auto_select(ds, {5, 0.8, 1});
  ASSERT_EQ(picked.size(), 2u);
  EXPECT_EQ(picked[0].name, "a=x");
  EXPECT_EQ(picked[1].name, "a=y");
}

TEST(AutoSelect, NeedsCategoricalColumns) {
  std::mt19937_64 rng(1);
  const auto ds = testing::random_dataset(rng, 10, 2, 3);
  EXPECT_EQ(code_of([&] { auto_select(ds); }), ErrorCode::NoCategoricalFeatures);
}

TEST(AutoSelect, FiltersHoldAndOrderDoesNotMatter) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    auto ds = categorical_dataset(rng, 400, {2, 3, 4});
    const AutoSelectOptions opts{30, 0.8, 3};
    const auto picked = auto_select(ds, opts);
    ASSERT_FALSE(picked.empty());
    std::vector<std::vector<std::size_t>> accepted;
    for (const auto& s : picked) {
      const auto m = members(s, ds);
      EXPECT_GE(m.size(), opts.min_size);
      for (const auto& prev : accepted) {
        std::vector<std::size_t> both;
        std::set_intersection(m.begin(), m.end(), prev.begin(), prev.end(), std::back_inserter(both));
        EXPECT_LE(static_cast<double>(both.size()) / static_cast<double>(m.size()), opts.max_overlap);
      }
      accepted.push_back(m);
    }
    for (std::size_t k = 1; k < accepted.size(); ++k) EXPECT_LE(accepted[k].size(), accepted[k - 1].size());

    std::shuffle(ds.records.begin(), ds.records.end(), rng);
    EXPECT_EQ(auto_select(ds, opts), picked);
  }
}

TEST(ConstraintSet, Composition) {
  const auto only = build_constraint_set({}, {}, 0.02, DistanceKind::L2);
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].subgroup.kind, SubgroupKind::FullPopulation);

  std::vector<SubgroupSpec> manual, automatic;
  for (int i = 0; i < 3; ++i) manual.push_back({"m" + std::to_string(i), SubgroupKind::Manual, {equals("c0", i)}});
  for (int i = 0; i < 8; ++i) automatic.push_back({"a" + std::to_string(i), SubgroupKind::Auto, {equals("c1", i)}});
  const auto set = build_constraint_set(manual, automatic, 0.02, DistanceKind::VarianceAdjusted, {{"m1", 0.5}});
  ASSERT_EQ(set.size(), 12u);
  EXPECT_EQ(set[0].subgroup.name, "all");
  EXPECT_EQ(set[2].subgroup.name, "m1");
  EXPECT_EQ(set[2].c, 0.5);
  EXPECT_EQ(set[3].c, 0.02);
  EXPECT_EQ(set[11].distance, DistanceKind::VarianceAdjusted);

  EXPECT_EQ(code_of([&] { build_constraint_set({manual[0], manual[0]}, {}, 0.02, DistanceKind::L2); }),
            ErrorCode::DuplicateName);
  EXPECT_EQ(code_of([&] { build_constraint_set(manual, {}, -1.0, DistanceKind::L2); }), ErrorCode::InvalidArgument);
}

TEST(DistanceKind, Parse) {
  EXPECT_EQ(parse_distance_kind("l2"), DistanceKind::L2);
  EXPECT_EQ(parse_distance_kind("var"), DistanceKind::VarianceAdjusted);
  EXPECT_EQ(parse_distance_kind("variance_adjusted"), DistanceKind::VarianceAdjusted);
  EXPECT_THROW(parse_distance_kind("l1"), Error);
}

TEST(SubgroupFile, RoundTrip) {
  const std::vector<FeatureInfo> features{{"sex", true, {"f", "m"}}, {"stage", true, {"I", "II", "III"}},
                                          {"age", false, {}}};
  SubgroupFile file;
  file.subgroups = {
      full_population(),
      {"male", SubgroupKind::Manual, {equals("sex", 1)}},
      {"late", SubgroupKind::Auto, {{"stage", Condition::Kind::InSet, {1, 2}}}},
      {"age35-40", SubgroupKind::Manual, {{"age", Condition::Kind::Interval, {}, 35, 40}, equals("sex", 0)}},
  };
  file.c_overrides = {{"male", 0.05}};
  std::stringstream buffer;
  write_subgroups(buffer, file, features);
  const auto back = read_subgroups(buffer, features);
  EXPECT_EQ(back.subgroups, file.subgroups);
  EXPECT_EQ(back.c_overrides, file.c_overrides);
}

TEST(SubgroupFile, ParsesCommentsAndRejectsGarbage) {
  const std::vector<FeatureInfo> features{{"sex", true, {"f", "m"}}};
  std::istringstream in("# header\n\nmanual women sex=f @c=0.1\n");
  const auto file = read_subgroups(in, features);
  ASSERT_EQ(file.subgroups.size(), 1u);
  EXPECT_EQ(file.subgroups[0].conditions[0].values, std::vector<double>{0.0});
  EXPECT_EQ(file.c_overrides.at("women"), 0.1);

  std::istringstream bad_kind("sometimes women sex=f\n");
  EXPECT_EQ(code_of([&] { read_subgroups(bad_kind, features); }), ErrorCode::CorruptArtifact);
  std::istringstream bad_label("manual x sex=q\n");
  EXPECT_EQ(code_of([&] { read_subgroups(bad_label, features); }), ErrorCode::CorruptArtifact);
  std::istringstream bad_feature("manual x smoker=1\n");
  EXPECT_THROW(read_subgroups(bad_feature, features), Error);
}

}  // namespace
}  // namespace mcsurv
