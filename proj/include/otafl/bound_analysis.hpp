#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "otafl/fl_task.hpp"
#include "otafl/model_state.hpp"
#include "otafl/rng.hpp"

namespace otafl {

// Constants of the non-convex convergence bound
//   (1/T) sum_t E||grad f(theta_t)||^2
//     <= 2 (E f(theta_0) - f*) / (eta mu_h T) + B1 / mu_h^2 + eta L B2 / mu_h.
struct BoundConstants {
  double L = 1.0;           // smoothness of f
  double G_sq = 0.0;        // bound on (1/N) sum_n ||grad f_n||^2
  double sigma_g_sq = 0.0;  // bound on (1/N) sum_n ||grad f_n - grad f||^2
  double mu_h = 1.0;
  double sigma_h_sq = 0.0;
  double sigma_z_sq = 0.0;
  double gamma = 1.0;
  std::size_t k = 1;
  std::size_t N = 1;
  double eta = 0.1;
  double f0 = 0.0;
  double f_star = 0.0;

  void validate() const {
    detail::require(mu_h > 0.0, "bound: mu_h must be > 0");
    detail::require(gamma > 0.0 && gamma <= 1.0, "bound: gamma must be in (0, 1]");
    detail::require(L > 0.0, "bound: L must be > 0");
    detail::require(N >= 1, "bound: N must be >= 1");
    detail::require(eta > 0.0, "bound: eta must be > 0");
  }
};

// B1 = 2 sigma_h^2 (G^2 + sigma_g^2) / N + 2 mu_h^2 (1 - gamma)(G^2 + sigma_g^2)
inline double compute_B1(const BoundConstants& c) {
  const double energy = c.G_sq + c.sigma_g_sq;
  return 2.0 * c.sigma_h_sq * energy / static_cast<double>(c.N) + 2.0 * c.mu_h * c.mu_h * (1.0 - c.gamma) * energy;
}

// B2 = (mu_h^2 + sigma_h^2)(G^2 + sigma_g^2) + k sigma_z^2
inline double compute_B2(const BoundConstants& c) {
  return (c.mu_h * c.mu_h + c.sigma_h_sq) * (c.G_sq + c.sigma_g_sq) + static_cast<double>(c.k) * c.sigma_z_sq;
}

// The part of the bound that does not decay with T.
inline double bound_floor(const BoundConstants& c) {
  c.validate();
  return compute_B1(c) / (c.mu_h * c.mu_h) + c.eta * c.L * compute_B2(c) / c.mu_h;
}

inline double bound_rhs(const BoundConstants& c, std::size_t T) {
  c.validate();
  detail::require(T >= 1, "bound_rhs: T must be >= 1");
  return 2.0 * (c.f0 - c.f_star) / (c.eta * c.mu_h * static_cast<double>(T)) + bound_floor(c);
}

// (1/N) sum_n ||grad f_n(theta)||^2
inline double gradient_energy(const Task& task, std::span<const Dataset> clients, const ModelParams& theta) {
  double s = 0.0;
  for (const auto& c : clients) s += l2_norm_sq(local_gradient(task, theta, c));
  return s / static_cast<double>(clients.size());
}

// (1/N) sum_n ||grad f_n(theta) - grad f(theta)||^2
inline double heterogeneity(const Task& task, std::span<const Dataset> clients, const ModelParams& theta) {
  std::vector<GradientVector> grads;
  GradientVector mean(task_dim(task));
  for (const auto& c : clients) {
    grads.push_back(local_gradient(task, theta, c));
    mean = add(mean, grads.back());
  }
  mean = scale(mean, 1.0 / static_cast<double>(clients.size()));
  double s = 0.0;
  for (const auto& g : grads) s += l2_norm_sq(subtract(g, mean));
  return s / static_cast<double>(clients.size());
}

// Largest eigenvalue of a symmetric PSD operator by power iteration,
// reported as the final Rayleigh quotient.
template <class Apply>
double power_iteration(std::size_t d, Apply&& apply, Rng& rng, std::size_t max_iters = 5000, double tol = 1e-13) {
  std::normal_distribution<double> normal(0.0, 1.0);
  GradientVector v(d);
  for (auto& x : v.values()) x = normal(rng);
  v = scale(v, 1.0 / std::sqrt(l2_norm_sq(v)));
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    GradientVector w = apply(v);
    const double next = dot(v, w);
    const double norm = std::sqrt(l2_norm_sq(w));
    if (norm == 0.0) return 0.0;
    v = scale(w, 1.0 / norm);
    if (it > 0 && std::fabs(next - lambda) <= tol * std::max(1.0, std::fabs(next))) return next;
    lambda = next;
  }
  return lambda;
}

struct EstimatedConstants {
  double L = 0.0;
  double G_sq = 0.0;
  double sigma_g_sq = 0.0;
  double f_star = 0.0;
};

// Quadratic tasks: the average target (1/N) sum_n mean(x in D_n) zeroes the
// global gradient, so the minimum is evaluated there exactly.
inline ModelParams quadratic_minimizer(const QuadraticTask& q, std::span<const Dataset> clients) {
  ModelParams star(q.d);
  for (const auto& c : clients) {
    for (std::size_t s = 0; s < c.size(); ++s) {
      auto x = c.row(s);
      for (std::size_t i = 0; i < q.d; ++i) star[i] += x[i] / static_cast<double>(c.size());
    }
  }
  return scale(star, 1.0 / static_cast<double>(clients.size()));
}

// L, G^2 and sigma_g^2 as maxima over the sample points; f* exactly for a
// quadratic, otherwise the best loss seen along `descent_steps` of
// noise-free full gradient descent with step 1/L from the first sample.
inline EstimatedConstants estimate_constants(const Task& task, std::span<const Dataset> clients,
                                             std::span<const ModelParams> sample_thetas, Rng& rng,
                                             std::size_t descent_steps = 2000) {
  detail::require(!sample_thetas.empty(), "estimate_constants: need at least one sample point");
  detail::require(!clients.empty(), "estimate_constants: no clients");
  const std::size_t d = task_dim(task);
  EstimatedConstants out;

  for (const auto& theta : sample_thetas) {
    out.G_sq = std::max(out.G_sq, gradient_energy(task, clients, theta));
    out.sigma_g_sq = std::max(out.sigma_g_sq, heterogeneity(task, clients, theta));
  }

  if (const auto* q = std::get_if<QuadraticTask>(&task)) {
    out.L = power_iteration(d, [&](const GradientVector& v) { return GradientVector(q->apply(v.values())); }, rng);
    out.f_star = global_loss(task, quadratic_minimizer(*q, clients), clients);
    return out;
  }

  for (const auto& theta : sample_thetas) {
    const double eps = 1e-5;
    auto hvp = [&](const GradientVector& v) {
      ModelParams plus(d), minus(d);
      for (std::size_t i = 0; i < d; ++i) {
        plus[i] = theta[i] + eps * v[i];
        minus[i] = theta[i] - eps * v[i];
      }
      return scale(subtract(global_gradient(task, plus, clients), global_gradient(task, minus, clients)),
                   0.5 / eps);
    };
    // FD Hessians of non-convex losses can be indefinite; the magnitude of
    // the dominant eigenvalue still bounds the curvature.
    out.L = std::max(out.L, std::fabs(power_iteration(d, hvp, rng, 500, 1e-8)));
  }

  ModelParams theta = sample_thetas.front();
  double best = global_loss(task, theta, clients);
  const double step_size = out.L > 0.0 ? 1.0 / out.L : 1e-2;
  for (std::size_t t = 0; t < descent_steps; ++t) {
    theta = descend(theta, step_size, global_gradient(task, theta, clients));
    const double f = global_loss(task, theta, clients);
    if (!std::isfinite(f)) break;
    best = std::min(best, f);
  }
  out.f_star = best;
  return out;
}

}  // namespace otafl
