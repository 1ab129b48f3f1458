#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "otafl/ota_channel.hpp"

using namespace otafl;

TEST(Aggregate, HandExample) {
  ChannelDraw draw{{2.0, 0.0}, CompressedVector{0.5, -0.5}};
  std::vector<CompressedVector> g{{1, 1}, {3, 5}};
  EXPECT_EQ(aggregate(draw, g), (CompressedVector{1.5, 0.5}));
}

TEST(Aggregate, UnitGainNoiselessIsMean) {
  ChannelDraw draw{{1.0, 1.0, 1.0}, CompressedVector(2)};
  std::vector<CompressedVector> g{{1, 2}, {3, 4}, {5, 9}};
  EXPECT_EQ(aggregate(draw, g), (CompressedVector{3, 5}));
}

TEST(Aggregate, ZeroPayloadsGiveNoise) {
  ChannelDraw draw{{0.7, 1.3}, CompressedVector{0.25, -2}};
  std::vector<CompressedVector> g{CompressedVector(2), CompressedVector(2)};
  EXPECT_EQ(aggregate(draw, g), draw.xi);
}

TEST(Aggregate, RejectsShapeMismatch) {
  ChannelDraw draw{{1.0}, CompressedVector(2)};
  std::vector<CompressedVector> g{CompressedVector(3)};
  EXPECT_THROW(aggregate(draw, g), ConfigError);
  std::vector<CompressedVector> two{CompressedVector(2), CompressedVector(2)};
  EXPECT_THROW(aggregate(draw, two), ConfigError);
}

TEST(SampleDraw, ConstantIsDeterministic) {
  Rng rng(1);
  auto model = ChannelModel::constant(1.0, 0.0);
  for (int i = 0; i < 50; ++i) {
    auto draw = sample_draw(model, 4, 3, rng);
    EXPECT_EQ(draw.h, std::vector<double>(4, 1.0));
    EXPECT_EQ(draw.xi, CompressedVector(3));
  }
}

TEST(SampleDraw, IdealChannelIsBitReproducible) {
  Rng a(2), b(3);
  auto model = ChannelModel::constant(1.0, 0.0);
  std::vector<CompressedVector> g{{0.1, 0.7}, {0.2, -0.3}};
  EXPECT_EQ(aggregate(sample_draw(model, 2, 2, a), g), aggregate(sample_draw(model, 2, 2, b), g));
}

TEST(ChannelModel, Validation) {
  EXPECT_THROW(ChannelModel::rayleigh(0.0, 0.0), ConfigError);
  EXPECT_THROW(ChannelModel::constant(1.0, -1.0), ConfigError);
  EXPECT_THROW(ChannelModel::gaussian_gain(1.0, -0.1, 0.0), ConfigError);
  EXPECT_NEAR(ChannelModel::rayleigh(2.0, 0.0).sigma_h_sq, 4.0 * (4.0 / std::numbers::pi - 1.0), 1e-15);
  EXPECT_NEAR(ChannelModel::rayleigh(1.0, 0.0).rayleigh_scale(), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_EQ(parse_fading("gaussian"), FadingKind::GaussianGain);
  EXPECT_FALSE(parse_fading("ricean").has_value());
}

TEST(SampleDraw, RayleighMoments) {
  Rng rng(4);
  auto model = ChannelModel::rayleigh(1.0, 0.0);
  const int n = 1000000;
  double s = 0.0, ss = 0.0;
  auto draw = sample_draw(model, n, 1, rng);
  for (double h : draw.h) {
    EXPECT_GE(h, 0.0);
    s += h;
    ss += h * h;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(ss / n - mean * mean, model.sigma_h_sq, 0.01);
}

TEST(SampleDraw, GaussianGainMoments) {
  Rng rng(5);
  auto model = ChannelModel::gaussian_gain(0.8, 0.3, 0.0);
  const int n = 200000;
  auto draw = sample_draw(model, n, 1, rng);
  double s = 0.0, ss = 0.0;
  for (double h : draw.h) {
    s += h;
    ss += h * h;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.8, 4 * std::sqrt(0.3 / n));
  EXPECT_NEAR(ss / n - mean * mean, 0.3, 0.01);
}

TEST(Aggregate, UnbiasedUpToFadingMean) {
  Rng rng(6);
  auto model = ChannelModel::rayleigh(1.0, 0.01);
  std::vector<CompressedVector> g{{1.0, -2.0, 0.5}, {3.0, 0.0, -1.5}, {-0.5, 4.0, 2.0}};
  const int n = 100000;
  std::vector<double> s(3, 0.0), ss(3, 0.0);
  for (int i = 0; i < n; ++i) {
    auto y = aggregate(sample_draw(model, 3, 3, rng), g);
    for (int j = 0; j < 3; ++j) {
      s[j] += y[j];
      ss[j] += y[j] * y[j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    const double expected = model.mu_h / 3.0 * (g[0][j] + g[1][j] + g[2][j]);
    const double mean = s[j] / n;
    const double se = std::sqrt((ss[j] / n - mean * mean) / n);
    EXPECT_LE(std::fabs(mean - expected), 4 * se) << "entry " << j;
  }
}

TEST(Aggregate, ConstantFadingNoiseVariance) {
  Rng rng(7);
  const double sigma_z_sq = 0.04;
  auto model = ChannelModel::constant(1.0, sigma_z_sq);
  std::vector<CompressedVector> g{{1.0, 2.0}, {-1.0, 0.5}};
  const int n = 100000;
  std::vector<double> s(2, 0.0), ss(2, 0.0);
  for (int i = 0; i < n; ++i) {
    auto y = aggregate(sample_draw(model, 2, 2, rng), g);
    for (int j = 0; j < 2; ++j) {
      s[j] += y[j];
      ss[j] += y[j] * y[j];
    }
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = s[j] / n;
    const double var = (ss[j] - n * mean * mean) / (n - 1);
    EXPECT_NEAR(var, sigma_z_sq, 0.05 * sigma_z_sq);
  }
}
