#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "otafl/bound_analysis.hpp"

using namespace otafl;

namespace {

BoundConstants sample_constants() {
  BoundConstants c;
  c.mu_h = 1.0;
  c.sigma_h_sq = 0.5;
  c.G_sq = 4.0;
  c.sigma_g_sq = 1.0;
  c.N = 10;
  c.gamma = 0.5;
  c.k = 10;
  c.sigma_z_sq = 0.1;
  c.L = 2.0;
  c.eta = 0.05;
  c.f0 = 3.0;
  c.f_star = 1.0;
  return c;
}

}  // namespace

TEST(B1, Examples) {
  auto c = sample_constants();
  EXPECT_DOUBLE_EQ(compute_B1(c), 5.5);
  c.sigma_h_sq = 0.0;
  c.gamma = 1.0;
  EXPECT_EQ(compute_B1(c), 0.0);
}

TEST(B1, DecreasingInGammaAndN) {
  auto c = sample_constants();
  double prev = compute_B1(c);
  for (double g : {0.6, 0.7, 0.9, 1.0}) {
    c.gamma = g;
    EXPECT_LT(compute_B1(c), prev);
    prev = compute_B1(c);
  }
  c = sample_constants();
  prev = compute_B1(c);
  for (std::size_t n : {20, 40, 80}) {
    c.N = n;
    EXPECT_LT(compute_B1(c), prev);
    prev = compute_B1(c);
  }
}

TEST(B2, Examples) {
  auto c = sample_constants();
  EXPECT_DOUBLE_EQ(compute_B2(c), 8.5);
  c.sigma_z_sq = 0.0;
  c.sigma_h_sq = 0.0;
  EXPECT_DOUBLE_EQ(compute_B2(c), 5.0);
}

TEST(B2, LinearInK) {
  auto c = sample_constants();
  const double base = compute_B2(c);
  for (std::size_t k : {11, 20, 35}) {
    c.k = k;
    EXPECT_NEAR(compute_B2(c) - base, (static_cast<double>(k) - 10.0) * c.sigma_z_sq, 1e-12);
  }
}

TEST(BoundRhs, HandSubstitution) {
  auto c = sample_constants();
  // 2 (3 - 1) / (0.05 * 1 * 100) + 5.5 / 1 + 0.05 * 2 * 8.5 / 1
  EXPECT_NEAR(bound_rhs(c, 100), 0.8 + 5.5 + 0.85, 1e-12);
  EXPECT_NEAR(bound_floor(c), 6.35, 1e-12);
}

TEST(BoundRhs, DoublingTHalvesTransientOnly) {
  auto c = sample_constants();
  const double floor = bound_floor(c);
  for (std::size_t T : {1, 10, 1000}) {
    EXPECT_NEAR(bound_rhs(c, 2 * T) - floor, 0.5 * (bound_rhs(c, T) - floor), 1e-12);
  }
  EXPECT_NEAR(bound_rhs(c, 1000000000), floor, 1e-6);
}

TEST(BoundRhs, Monotonicity) {
  const auto base = sample_constants();
  const double ref = bound_rhs(base, 50);
  auto c = base;
  c.gamma = 0.8;
  EXPECT_LE(bound_rhs(c, 50), ref);
  c = base;
  c.N = 100;
  EXPECT_LE(bound_rhs(c, 50), ref);
  c = base;
  c.sigma_z_sq = 1.0;
  EXPECT_GE(bound_rhs(c, 50), ref);
  c = base;
  c.sigma_h_sq = 0.9;
  EXPECT_GE(bound_rhs(c, 50), ref);
  c = base;
  c.sigma_g_sq = 3.0;
  EXPECT_GE(bound_rhs(c, 50), ref);
}

TEST(BoundRhs, RejectsInvalidConstants) {
  auto c = sample_constants();
  c.mu_h = 0.0;
  EXPECT_THROW(bound_rhs(c, 10), ConfigError);
  c = sample_constants();
  c.gamma = 0.0;
  EXPECT_THROW(bound_rhs(c, 10), ConfigError);
  EXPECT_THROW(bound_rhs(sample_constants(), 0), ConfigError);
}

TEST(EstimateConstants, IdentityQuadratic) {
  Rng rng(1);
  Task task = QuadraticTask::identity(6);
  std::vector<Dataset> clients(3, Dataset{6, 1, {1, 2, 3, 4, 5, 6}, {0}});
  std::vector<ModelParams> thetas{ModelParams(6), ModelParams{1, 1, 1, 1, 1, 1}};
  auto est = estimate_constants(task, clients, thetas, rng);
  EXPECT_NEAR(est.L, 1.0, 1e-12);
  EXPECT_EQ(est.sigma_g_sq, 0.0);
  EXPECT_NEAR(est.f_star, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(est.G_sq, 91.0);
}

TEST(EstimateConstants, QuadraticLAndMinimum) {
  Rng rng(2);
  auto prob = gen_quadratic(12, 5, 1.0, rng);
  Task task = prob.task;
  std::vector<ModelParams> thetas{ModelParams(12)};
  auto est = estimate_constants(task, prob.clients, thetas, rng);

  // Dense cross-check: power iteration on A^2 from a fixed start.
  Rng other(3);
  const double L2 = power_iteration(
      12, [&](const GradientVector& v) { return GradientVector(prob.task.apply(prob.task.apply(v.values()))); },
      other);
  EXPECT_NEAR(est.L, std::sqrt(L2), 1e-6);

  auto star = quadratic_minimizer(prob.task, prob.clients);
  EXPECT_LT(l2_norm_sq(global_gradient(task, star, prob.clients)), 1e-20);
  EXPECT_GT(est.f_star, 0.0);
}

TEST(EstimateConstants, MaximaGrowWithMorePoints) {
  Rng rng(4);
  auto data = gen_synthetic(4, 3, 90, 2.0, rng);
  auto clients = dirichlet_partition(data, {0.3, 5}, rng);
  Task task = LogisticTask{4, 3, 0.0};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ModelParams> thetas;
  double prev_g = 0.0, prev_h = 0.0;
  for (int i = 0; i < 4; ++i) {
    ModelParams t(task_dim(task));
    for (auto& v : t.values()) v = normal(rng);
    thetas.push_back(t);
    Rng est_rng(5);
    auto est = estimate_constants(task, clients, thetas, est_rng, 10);
    EXPECT_GE(est.G_sq, prev_g);
    EXPECT_GE(est.sigma_g_sq, prev_h);
    EXPECT_GT(est.L, 0.0);
    prev_g = est.G_sq;
    prev_h = est.sigma_g_sq;
  }
}

TEST(Heterogeneity, IdenticalClientsGiveZero) {
  Rng rng(6);
  auto data = gen_synthetic(3, 2, 20, 1.0, rng);
  Task task = MlpTask{3, 4, 2};
  std::vector<Dataset> same(5, data);
  ModelParams theta(task_dim(task), 0.3);
  EXPECT_EQ(heterogeneity(task, same, theta), 0.0);
  EXPECT_GT(gradient_energy(task, same, theta), 0.0);
}
