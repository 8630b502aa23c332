#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "segtriage/seg_metrics.hpp"
#include "segtriage/uncertainty.hpp"

using namespace segtriage;

TEST(PixelEntropy, Anchors) {
  EXPECT_EQ(pixel_entropy(std::vector<double>{1, 0, 0, 0}), 0.0);
  EXPECT_NEAR(pixel_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-12);
  EXPECT_NEAR(pixel_entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-12);
  for (std::size_t c = 2; c <= 8; ++c) {
    EXPECT_NEAR(pixel_entropy(std::vector<double>(c, 1.0 / double(c))), std::log(double(c)), 1e-9);
  }
}

TEST(EntropyMap, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = mean_probability(fixture::random_stack(rng, 3, 5, 10, 10));
    const auto u = entropy_map(m);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MeanProbabilityMap shuffled = m;
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t i = 0; i < 100; ++i) shuffled.at(perm[c], i) = m.at(c, i);
    }
    const auto v = entropy_map(shuffled);
    for (std::size_t i = 0; i < 100; ++i) {
      ASSERT_GE(u.values[i], 0.0);
      ASSERT_LE(u.values[i], std::log(5.0) + 1e-9);
      ASSERT_NEAR(u.values[i], v.values[i], 1e-12);
      std::vector<double> p(5);
      for (std::size_t c = 0; c < 5; ++c) p[c] = m.at(c, i);
      ASSERT_NEAR(u.values[i], oracle::entropy(p), 1e-12);
    }
  }
}

TEST(ClassUncertainties, ConstantMap) {
  UncertaintyMap u{2, 3, 3, std::vector<double>(6, 0.37)};
  const ClassRaster seg(2, 3, std::vector<std::uint8_t>{0, 2, 2, 0, 0, 2});
  const auto cu = class_uncertainties(u, seg, fixture::spec_of(3));
  EXPECT_DOUBLE_EQ(*cu.u[0], 0.37);
  EXPECT_FALSE(cu.u[1].has_value());
  EXPECT_DOUBLE_EQ(*cu.u[2], 0.37);
}

TEST(ClassUncertainties, TwoByTwoWorkedExample) {
  UncertaintyMap u{2, 2, 2, {0.1, 0.9, 0.3, 0.5}};
  const ClassRaster seg(2, 2, std::vector<std::uint8_t>{0, 1, 0, 1});
  const auto cu = class_uncertainties(u, seg, fixture::spec_of(2));
  EXPECT_NEAR(*cu.u[0], 0.2, 1e-12);
  EXPECT_NEAR(*cu.u[1], 0.7, 1e-12);
  EXPECT_EQ(cu.pixel_counts, (std::vector<std::size_t>{2, 2}));
}

TEST(ClassUncertainties, AllBackgroundLeavesOthersAbsent) {
  UncertaintyMap u{2, 2, 4, {0.1, 0.2, 0.3, 0.4}};
  const auto cu = class_uncertainties(u, ClassRaster(2, 2, 0), fixture::spec_of(4));
  EXPECT_TRUE(cu.u[0].has_value());
  for (std::size_t c = 1; c < 4; ++c) {
    EXPECT_FALSE(cu.u[c].has_value());
    EXPECT_EQ(cu.pixel_counts[c], 0u);
  }
}

TEST(ImageMeanEntropy, AnchorsAndOracle) {
  EXPECT_EQ(image_mean_entropy(UncertaintyMap{2, 2, 2, std::vector<double>(4, 0.0)}), 0.0);
  EXPECT_NEAR(image_mean_entropy(UncertaintyMap{3, 3, 2, std::vector<double>(9, std::log(2.0))}), std::log(2.0),
              1e-15);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ud(0.0, std::log(4.0));
  UncertaintyMap u{16, 16, 4, std::vector<double>(256)};
  for (auto& v : u.values) v = ud(rng);
  double s = 0.0;
  for (double v : u.values) s += v;
  EXPECT_NEAR(image_mean_entropy(u), s / 256.0, 1e-9);
}

TEST(ClassUncertainties, CountsPartitionAndAggregatesAgree) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto m = mean_probability(fixture::random_stack(rng, 2, 4, 9, 7));
    const auto seg = argmax_segmentation(m);
    const auto u = entropy_map(m);
    const auto cu = class_uncertainties(u, seg, fixture::spec_of(4));
    std::size_t total = 0;
    double weighted = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      total += cu.pixel_counts[c];
      EXPECT_EQ(cu.u[c].has_value(), cu.pixel_counts[c] > 0);
      if (cu.u[c]) weighted += *cu.u[c] * double(cu.pixel_counts[c]);
    }
    EXPECT_EQ(total, 63u);
    EXPECT_NEAR(weighted / 63.0, image_mean_entropy(u), 1e-9);
  }
}

TEST(EntropyGray, ScalesToFullRange) {
  UncertaintyMap u{1, 3, 4, {0.0, std::log(4.0) / 2.0, std::log(4.0)}};
  EXPECT_EQ(entropy_to_gray(u), (std::vector<std::uint8_t>{0, 128, 255}));
}
