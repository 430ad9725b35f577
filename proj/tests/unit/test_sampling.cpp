#include <gtest/gtest.h>

#include <array>
#include <random>
#include <vector>

#include "ed/sampling.hpp"

TEST(Sample, PointMassInBothModes) {
  ed::Rng rng(1);
  const std::vector<double> p{0.0, 1.0, 0.0};
  EXPECT_EQ(ed::sample(p, ed::Sampling::Greedy, rng), 1u);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ed::sample(p, ed::Sampling::Multinomial, rng), 1u);
}

TEST(Sample, GreedyTieGoesToLowerIndex) {
  ed::Rng rng(1);
  EXPECT_EQ(ed::sample(std::vector<double>{0.5, 0.5, 0.0}, ed::Sampling::Greedy, rng), 0u);
}

TEST(Sample, UniformFrequenciesWithSeed42) {
  ed::Rng rng(42);
  const std::vector<double> p(4, 0.25);
  std::array<int, 4> counts{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[ed::sample(p, ed::Sampling::Multinomial, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, 0.25, 0.01);
}

TEST(Sample, UniformVariateFollowsDocumentedRecipe) {
  ed::Rng rng(42);
  std::mt19937_64 ref(42);
  for (int i = 0; i < 10; ++i) {
    const double want = static_cast<double>(ref() >> 11) / 9007199254740992.0;
    EXPECT_EQ(rng.uniform(), want);
  }
}

TEST(Sample, NeverPicksZeroMassToken) {
  ed::Rng rng(5);
  const std::vector<double> p{0.0, 0.3, 0.0, 0.7, 0.0};
  for (int i = 0; i < 10000; ++i) {
    const auto t = ed::sample(p, ed::Sampling::Multinomial, rng);
    ASSERT_TRUE(t == 1 || t == 3);
  }
}

TEST(Sample, RejectsUnnormalizedInput) {
  ed::Rng rng(1);
  EXPECT_THROW(ed::sample(std::vector<double>{0.5, 0.6}, ed::Sampling::Greedy, rng), ed::InternalError);
  EXPECT_THROW(ed::sample(std::vector<double>{}, ed::Sampling::Greedy, rng), ed::InternalError);
  EXPECT_THROW(ed::sample(std::vector<double>{1.5, -0.5}, ed::Sampling::Multinomial, rng), ed::InternalError);
}
