#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "otafl/bound_analysis.hpp"
#include "otafl/server_loop.hpp"

using namespace otafl;

namespace {

Federation quadratic_federation(std::size_t d, std::size_t N, Strategy s, ChannelModel ch, double eta,
                                std::uint64_t seed) {
  Rng rng(seed);
  auto prob = gen_quadratic(d, N, 1.0, rng);
  return Federation{prob.task, prob.clients, ch, s, eta, 1};
}

Federation logistic_federation(Strategy s, std::size_t threads, std::uint64_t seed) {
  Rng rng(seed);
  auto data = gen_synthetic(9, 4, 400, 3.0, rng);
  auto clients = dirichlet_partition(data, {0.3, 6}, rng);
  return Federation{LogisticTask{9, 4, 0.0}, clients, ChannelModel::rayleigh(1.0, 1e-3), s, 0.2, threads};
}

}  // namespace

TEST(Init, ColdStart) {
  Rng rng(1);
  auto state = init_state({StrategyKind::AgeTopK, 6, 4}, ModelParams(10), rng);
  EXPECT_EQ(state.ages, AgeVector(10));
  EXPECT_EQ(state.g_global, GradientVector(10));
  EXPECT_EQ(state.round, 0u);
  EXPECT_EQ(state.mask, SparseMask(10, {0, 1, 2, 3}));
  EXPECT_THROW(init_state({StrategyKind::AgeTopK, 11, 4}, ModelParams(10), rng), ConfigError);
}

TEST(Step, IdealChannelFullMaskIsGradientDescent) {
  const std::size_t d = 20;
  auto fed = quadratic_federation(d, 1, {StrategyKind::TopK, d, d}, ChannelModel::constant(1.0, 0.0), 0.1, 2);
  Rng rng(3);
  auto theta0 = gaussian_init(d, 1.0, rng);
  auto state = init_state(fed.strategy, theta0, rng);
  ModelParams reference = theta0;
  for (int t = 0; t < 100; ++t) {
    auto [next, rec] = step(std::move(state), fed, rng);
    state = std::move(next);
    reference = descend(reference, fed.eta, local_gradient(fed.task, reference, fed.clients[0]));
    ASSERT_FALSE(rec.aborted);
  }
  for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(state.theta[j], reference[j], 1e-12);
}

TEST(Step, AgeLawGlobalGradientAndLocality) {
  auto fed = logistic_federation({StrategyKind::AgeTopK, 12, 8}, 1, 4);
  Rng rng(5);
  auto state = init_state(fed.strategy, gaussian_init(fed.dim(), 0.05, rng), rng);
  for (int t = 0; t < 200; ++t) {
    const ServerState before = state;
    auto [next, rec] = step(state, fed, rng);
    ASSERT_FALSE(rec.aborted);
    std::size_t zeros = 0;
    for (std::size_t j = 0; j < fed.dim(); ++j) {
      if (before.mask.contains(j)) {
        EXPECT_EQ(next.ages[j], 0u);
        ++zeros;
      } else {
        EXPECT_EQ(next.ages[j], before.ages[j] + 1);
        EXPECT_EQ(next.g_global[j], before.g_global[j]);
        EXPECT_EQ(next.theta[j], before.theta[j]);
      }
    }
    EXPECT_EQ(zeros, fed.strategy.k);
    EXPECT_EQ(next.round, before.round + 1);
    EXPECT_EQ(rec.round, before.round);
    EXPECT_EQ(rec.mask, std::vector<std::size_t>(before.mask.indices().begin(), before.mask.indices().end()));
    state = std::move(next);
  }
}

TEST(Step, AgeKStalenessIsBounded) {
  auto fed = logistic_federation({StrategyKind::AgeK, 40, 7}, 1, 6);
  const std::size_t d = fed.dim();
  ASSERT_EQ(d, 40u);
  Rng rng(7);
  auto state = init_state(fed.strategy, gaussian_init(d, 0.05, rng), rng);
  const std::uint64_t bound = (d + 6) / 7;
  for (int t = 0; t < 60; ++t) {
    auto [next, rec] = step(std::move(state), fed, rng);
    EXPECT_LE(rec.max_age, bound);
    state = std::move(next);
  }
}

TEST(Step, ColdStartCandidatesStayInitialBlock) {
  // Coordinates never transmitted keep g_global = 0, so once r entries are
  // nonzero the magnitude stage never admits them.
  auto fed = logistic_federation({StrategyKind::AgeTopK, 12, 8}, 1, 8);
  Rng rng(9);
  auto state = init_state(fed.strategy, gaussian_init(fed.dim(), 0.05, rng), rng);
  for (int t = 0; t < 50; ++t) {
    for (auto j : state.mask.indices()) EXPECT_LT(j, 12u);
    state = step(std::move(state), fed, rng).first;
  }
}

TEST(Simulate, ZeroRoundsIsEmpty) {
  auto fed = logistic_federation({StrategyKind::TopK, 5, 5}, 1, 10);
  Rng rng(11);
  auto state = init_state(fed.strategy, ModelParams(fed.dim()), rng);
  auto result = simulate(state, fed, 0, rng);
  EXPECT_TRUE(result.records.empty());
  EXPECT_FALSE(result.aborted);
  EXPECT_EQ(result.final_state.theta, state.theta);
}

TEST(Simulate, DeterministicAcrossThreadCounts) {
  std::vector<RunResult> results;
  for (std::size_t threads : {1, 3, 8}) {
    for (auto kind : {StrategyKind::AgeTopK, StrategyKind::RandomK}) {
      auto fed = logistic_federation(Strategy::make(kind, 40, 12, 8), threads, 12);
      Rng rng(13);
      auto state = init_state(fed.strategy, gaussian_init(fed.dim(), 0.05, rng), rng);
      results.push_back(simulate(std::move(state), fed, 40, rng));
    }
  }
  for (std::size_t i = 2; i < results.size(); ++i) {
    const auto& a = results[i % 2];
    const auto& b = results[i];
    EXPECT_EQ(a.final_state.theta, b.final_state.theta);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t t = 0; t < a.records.size(); ++t) {
      EXPECT_EQ(a.records[t].global_loss, b.records[t].global_loss);
      EXPECT_EQ(a.records[t].mask, b.records[t].mask);
    }
  }
}

TEST(Simulate, NoiseFreeFullMaskLossIsMonotone) {
  const std::size_t d = 15;
  auto fed = quadratic_federation(d, 5, {StrategyKind::AgeK, d, d}, ChannelModel::constant(1.0, 0.0), 0.0, 14);
  Rng rng(15);
  const double L = power_iteration(
      d, [&](const GradientVector& v) { return GradientVector(std::get<QuadraticTask>(fed.task).apply(v.values())); },
      rng);
  for (double factor : {0.1, 1.0, 1.9}) {
    fed.eta = factor / L;
    auto state = init_state(fed.strategy, gaussian_init(d, 2.0, rng), rng);
    auto result = simulate(std::move(state), fed, 100, rng);
    for (std::size_t t = 1; t < result.records.size(); ++t) {
      EXPECT_LE(result.records[t].global_loss, result.records[t - 1].global_loss * (1 + 1e-14));
    }
  }
}

TEST(Simulate, DivergenceAborts) {
  const std::size_t d = 10;
  auto fed = quadratic_federation(d, 3, {StrategyKind::TopK, d, d}, ChannelModel::constant(1.0, 0.0), 1e6, 16);
  Rng rng(17);
  auto state = init_state(fed.strategy, gaussian_init(d, 1.0, rng), rng);
  auto result = simulate(std::move(state), fed, 1000, rng);
  ASSERT_TRUE(result.aborted);
  EXPECT_LT(result.records.size(), 1000u);
  EXPECT_TRUE(result.records.back().aborted);
  EXPECT_FALSE(result.records.back().diagnostic.empty());
  EXPECT_TRUE(result.final_state.theta.all_finite());
  for (std::size_t t = 0; t + 1 < result.records.size(); ++t) EXPECT_FALSE(result.records[t].aborted);
}

TEST(Simulate, EvaluatorSeesUpdatedModel) {
  auto fed = logistic_federation({StrategyKind::TopK, 5, 5}, 1, 18);
  Rng rng(19);
  auto state = init_state(fed.strategy, ModelParams(fed.dim()), rng);
  std::vector<ModelParams> seen;
  auto result = simulate(state, fed, 3, rng, [&](const ModelParams& theta, RoundRecord& rec) {
    seen.push_back(theta);
    rec.train_accuracy = 0.5;
  });
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen.back(), result.final_state.theta);
  EXPECT_EQ(result.records[0].train_accuracy, 0.5);
}
