#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "otafl/model_state.hpp"
#include "otafl/rng.hpp"

namespace otafl {

enum class StrategyKind { AgeTopK, TopK, RandomK, AgeK, RTopK };

inline std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AgeTopK: return "agetopk";
    case StrategyKind::TopK: return "topk";
    case StrategyKind::RandomK: return "randomk";
    case StrategyKind::AgeK: return "agek";
    case StrategyKind::RTopK: return "rtopk";
  }
  return "unknown";
}

inline std::optional<StrategyKind> parse_strategy(std::string_view name) {
  for (auto kind : {StrategyKind::AgeTopK, StrategyKind::TopK, StrategyKind::RandomK,
                    StrategyKind::AgeK, StrategyKind::RTopK}) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

// Index-selection strategy with its candidate count r and transmit count k.
struct Strategy {
  StrategyKind kind = StrategyKind::AgeTopK;
  std::size_t r = 1;
  std::size_t k = 1;

  // Builds a strategy for dimension d, pinning r where the kind fixes it:
  // Top-k uses r = k, Age-k uses r = d, Random-k has no candidate stage (r = d).
  static Strategy make(StrategyKind kind, std::size_t d, std::size_t r, std::size_t k) {
    Strategy s{kind, r, k};
    if (kind == StrategyKind::TopK) s.r = k;
    if (kind == StrategyKind::AgeK || kind == StrategyKind::RandomK) s.r = d;
    s.validate(d);
    return s;
  }

  void validate(std::size_t d) const {
    detail::require(k >= 1, "strategy: k must be >= 1");
    detail::require(k <= r, "strategy: k=" + std::to_string(k) + " exceeds r=" + std::to_string(r));
    detail::require(r <= d, "strategy: r=" + std::to_string(r) + " exceeds d=" + std::to_string(d));
    detail::require(kind != StrategyKind::TopK || r == k, "strategy: topk requires r == k");
    detail::require(kind != StrategyKind::AgeK || r == d, "strategy: agek requires r == d");
  }
};

struct CompressorQuality {
  double gamma = 1.0;
  double beta = 1.0;
};

namespace detail {

// Strict "ranks before" for magnitude selection: larger |g| first, lower index on ties.
inline auto magnitude_order(const GradientVector& g) {
  return [&g](std::size_t a, std::size_t b) {
    const double ma = std::fabs(g[a]);
    const double mb = std::fabs(g[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
}

// Larger age first, then larger |g|, then lower index.
inline auto age_order(const AgeVector& ages, const GradientVector& g) {
  return [&ages, &g](std::size_t a, std::size_t b) {
    if (ages[a] != ages[b]) return ages[a] > ages[b];
    const double ma = std::fabs(g[a]);
    const double mb = std::fabs(g[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
}

template <class Order>
std::vector<std::size_t> best_n(std::vector<std::size_t> pool, std::size_t n, Order order) {
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), order);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::vector<std::size_t> all_indices(std::size_t d) {
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline std::vector<std::size_t> sample_without_replacement(const std::vector<std::size_t>& pool,
                                                           std::size_t n, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(n);
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), n, rng);
  return out;
}

}  // namespace detail

// Indices of the r largest-magnitude entries of g_global, ascending.
inline std::vector<std::size_t> select_top_r(const GradientVector& g_global, std::size_t r) {
  detail::require(r >= 1 && r <= g_global.dim(),
                  "select_top_r: r=" + std::to_string(r) + " out of range for d=" +
                      std::to_string(g_global.dim()));
  return detail::best_n(detail::all_indices(g_global.dim()), r, detail::magnitude_order(g_global));
}

// The k stalest coordinates of the candidate set. Age ties go to the larger
// |g_global| and then to the lower index.
inline SparseMask select_top_k_by_age(const std::vector<std::size_t>& candidates, const AgeVector& ages,
                                      const GradientVector& g_global, std::size_t k) {
  detail::require_same_dim(ages.dim(), g_global.dim(), "select_top_k_by_age");
  detail::require(k >= 1 && k <= candidates.size(),
                  "select_top_k_by_age: k=" + std::to_string(k) + " exceeds candidate count " +
                      std::to_string(candidates.size()));
  for (auto j : candidates) {
    detail::require(j < ages.dim(), "select_top_k_by_age: candidate index out of range");
  }
  return SparseMask(ages.dim(), detail::best_n(candidates, k, detail::age_order(ages, g_global)));
}

inline SparseMask select(const Strategy& strategy, const GradientVector& g_global, const AgeVector& ages,
                         Rng& rng) {
  const std::size_t d = g_global.dim();
  detail::require_same_dim(d, ages.dim(), "select");
  strategy.validate(d);
  switch (strategy.kind) {
    case StrategyKind::AgeTopK:
      return select_top_k_by_age(select_top_r(g_global, strategy.r), ages, g_global, strategy.k);
    case StrategyKind::TopK:
      return SparseMask(d, select_top_r(g_global, strategy.k));
    case StrategyKind::RandomK:
      return SparseMask(d, detail::sample_without_replacement(detail::all_indices(d), strategy.k, rng));
    case StrategyKind::AgeK:
      return select_top_k_by_age(detail::all_indices(d), ages, g_global, strategy.k);
    case StrategyKind::RTopK:
      return SparseMask(
          d, detail::sample_without_replacement(select_top_r(g_global, strategy.r), strategy.k, rng));
  }
  throw ConfigError("select: unknown strategy");
}

// gamma = k / (k + (r - k) beta + (d - r))
inline CompressorQuality gamma_of(std::size_t d, std::size_t r, std::size_t k, double beta) {
  detail::require(k >= 1 && k <= r && r <= d, "gamma_of: requires 1 <= k <= r <= d");
  detail::require(beta >= 1.0 && std::isfinite(beta), "gamma_of: beta must be >= 1");
  const double kd = static_cast<double>(k);
  const double denom = kd + static_cast<double>(r - k) * beta + static_cast<double>(d - r);
  return {kd / denom, beta};
}

// Random vector whose largest magnitude is at most beta times its r-th
// largest magnitude: the top r magnitudes lie in [m, beta m], the rest in
// [0, m], with random signs and positions.
inline GradientVector gen_assumption1_vector(std::size_t d, std::size_t r, double beta, Rng& rng) {
  detail::require(r >= 1 && r <= d, "gen_assumption1_vector: requires 1 <= r <= d");
  detail::require(beta >= 1.0, "gen_assumption1_vector: beta must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution sign(0.5);
  const double m = std::exp(std::uniform_real_distribution<double>(-3.0, 3.0)(rng));

  std::vector<double> mags(d);
  for (std::size_t i = 0; i < d; ++i) {
    mags[i] = i < r ? m * (1.0 + (beta - 1.0) * unit(rng)) : m * unit(rng);
  }
  std::shuffle(mags.begin(), mags.end(), rng);
  GradientVector g(d);
  for (std::size_t i = 0; i < d; ++i) g[i] = sign(rng) ? mags[i] : -mags[i];
  return g;
}

// Relative compression error ||g - S g||^2 / ||g||^2; 0 for the zero vector.
inline double measure_retention(const SparseMask& mask, const GradientVector& g) {
  detail::require_same_dim(mask.dim(), g.dim(), "measure_retention");
  const double total = l2_norm_sq(g);
  if (total == 0.0) return 0.0;
  const auto keep = mask.selected();
  double dropped = 0.0;
  for (std::size_t j = 0; j < g.dim(); ++j) {
    if (!keep[j]) dropped += g[j] * g[j];
  }
  return dropped / total;
}

}  // namespace otafl
