#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "otafl/fl_task.hpp"
#include "otafl/model_state.hpp"
#include "otafl/ota_channel.hpp"
#include "otafl/rng.hpp"
#include "otafl/sparsifier.hpp"

namespace otafl {

// Server-side state entering a round: the model, the stale global gradient,
// per-coordinate ages and the mask already broadcast for this round.
struct ServerState {
  ModelParams theta;
  GradientVector g_global;
  AgeVector ages;
  std::uint64_t round = 0;
  SparseMask mask;
};

// Loss and gradient norm are measured at the model entering the round;
// accuracies (when an evaluator is attached) at the model leaving it.
struct RoundRecord {
  std::uint64_t round = 0;
  double global_loss = 0.0;
  double grad_norm_sq = 0.0;
  std::vector<std::size_t> mask;
  std::uint64_t max_age = 0;
  double mean_age = 0.0;
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
  std::string diagnostic;
};

// Everything a round needs besides the server state.
struct Federation {
  Task task;
  std::vector<Dataset> clients;
  ChannelModel channel;
  Strategy strategy;
  double eta = 0.1;
  std::size_t threads = 1;

  std::size_t dim() const { return task_dim(task); }
  std::size_t num_clients() const { return clients.size(); }
};

using Evaluator = std::function<void(const ModelParams&, RoundRecord&)>;

struct RunResult {
  std::vector<RoundRecord> records;
  ServerState final_state;
  bool aborted = false;
};

namespace detail {

// Runs fn(i) for i in [0, n) over up to `threads` workers; each index is
// handled by exactly one worker, so outputs written per index do not depend
// on the thread count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) fn(i);
    });
  }
}

}  // namespace detail

// Cold start: zero global gradient, zero ages, first mask from that state.
inline ServerState init_state(const Strategy& strategy, ModelParams theta0, Rng& rng) {
  const std::size_t d = theta0.dim();
  detail::require(d >= 1, "init: model dimension must be positive");
  detail::require(theta0.all_finite(), "init: initial model has non-finite entries");
  strategy.validate(d);
  GradientVector g_global(d);
  AgeVector ages(d);
  auto mask = select(strategy, g_global, ages, rng);
  return {std::move(theta0), std::move(g_global), std::move(ages), 0, std::move(mask)};
}

inline ModelParams gaussian_init(std::size_t d, double scale, Rng& rng) {
  detail::require(scale >= 0.0, "init: theta0 scale must be >= 0");
  ModelParams theta(d);
  if (scale > 0.0) {
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& v : theta.values()) v = normal(rng);
  }
  return theta;
}

// One communication round: local gradients, masking, over-the-air
// aggregation, reconstruction, model update, global-gradient and age
// refresh, then the next round's mask. On a non-finite value the returned
// record is flagged `aborted` and the state is returned unchanged.
inline std::pair<ServerState, RoundRecord> step(ServerState state, const Federation& fed, Rng& rng,
                                                const Evaluator& evaluate = {}) {
  const std::size_t d = state.theta.dim();
  const std::size_t N = fed.num_clients();
  detail::require(N >= 1, "step: no clients");
  detail::require_same_dim(fed.dim(), d, "step (task vs model)");
  detail::require_same_dim(state.mask.dim(), d, "step (mask vs model)");

  RoundRecord rec;
  rec.round = state.round;

  std::vector<GradientVector> local(N);
  std::vector<double> losses(N);
  detail::parallel_for(N, fed.threads, [&](std::size_t n) {
    local[n] = local_gradient(fed.task, state.theta, fed.clients[n]);
    losses[n] = local_loss(fed.task, state.theta, fed.clients[n]);
  });

  GradientVector full(d);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    full = add(full, local[n]);
    loss += losses[n];
  }
  rec.global_loss = loss / static_cast<double>(N);
  rec.grad_norm_sq = l2_norm_sq(scale(full, 1.0 / static_cast<double>(N)));
  if (!std::isfinite(rec.global_loss) || !std::isfinite(rec.grad_norm_sq)) {
    rec.aborted = true;
    rec.diagnostic = "non-finite loss or gradient at round " + std::to_string(state.round);
    return {std::move(state), std::move(rec)};
  }

  std::vector<CompressedVector> payloads;
  payloads.reserve(N);
  for (const auto& g : local) payloads.push_back(apply_mask(state.mask, g));

  const auto draw = sample_draw(fed.channel, N, state.mask.k(), rng);
  const auto received = aggregate(draw, payloads);
  const auto reconstructed = scatter(state.mask, received);

  ModelParams next_theta = descend(state.theta, fed.eta, reconstructed);
  if (!next_theta.all_finite()) {
    rec.aborted = true;
    rec.diagnostic = "non-finite model after update at round " + std::to_string(state.round);
    return {std::move(state), std::move(rec)};
  }

  GradientVector next_global = state.g_global;
  std::vector<std::uint64_t> next_ages(d);
  const auto chosen = state.mask.selected();
  for (std::size_t j = 0; j < d; ++j) {
    if (chosen[j]) {
      next_global[j] = reconstructed[j];
      next_ages[j] = 0;
    } else {
      next_ages[j] = state.ages[j] + 1;
    }
  }

  rec.mask.assign(state.mask.indices().begin(), state.mask.indices().end());
  AgeVector ages(std::move(next_ages));
  rec.max_age = ages.max();
  rec.mean_age = ages.mean();
  if (evaluate) evaluate(next_theta, rec);

  auto next_mask = select(fed.strategy, next_global, ages, rng);
  ServerState next{std::move(next_theta), std::move(next_global), std::move(ages), state.round + 1,
                   std::move(next_mask)};
  return {std::move(next), std::move(rec)};
}

// T rounds from `state`; stops early (and flags the result) on divergence,
// keeping the aborted round's record as the last entry.
inline RunResult simulate(ServerState state, const Federation& fed, std::size_t rounds, Rng& rng,
                          const Evaluator& evaluate = {}) {
  RunResult result{{}, std::move(state), false};
  result.records.reserve(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    auto [next, rec] = step(std::move(result.final_state), fed, rng, evaluate);
    result.final_state = std::move(next);
    const bool aborted = rec.aborted;
    result.records.push_back(std::move(rec));
    if (aborted) {
      result.aborted = true;
      break;
    }
  }
  return result;
}

}  // namespace otafl
