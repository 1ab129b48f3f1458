#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otafl/model_state.hpp"
#include "otafl/rng.hpp"

namespace otafl {

enum class FadingKind { Rayleigh, Constant, GaussianGain };

inline std::string_view to_string(FadingKind kind) {
  switch (kind) {
    case FadingKind::Rayleigh: return "rayleigh";
    case FadingKind::Constant: return "constant";
    case FadingKind::GaussianGain: return "gaussian";
  }
  return "unknown";
}

inline std::optional<FadingKind> parse_fading(std::string_view name) {
  for (auto kind : {FadingKind::Rayleigh, FadingKind::Constant, FadingKind::GaussianGain}) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

// Scalar fading per client per round plus per-entry AWGN. Use the factories:
// they keep sigma_h_sq consistent with the fading kind.
struct ChannelModel {
  FadingKind fading = FadingKind::Constant;
  double mu_h = 1.0;
  double sigma_h_sq = 0.0;
  double sigma_z_sq = 0.0;

  static ChannelModel constant(double mu_h, double sigma_z_sq) {
    ChannelModel m{FadingKind::Constant, mu_h, 0.0, sigma_z_sq};
    m.validate();
    return m;
  }

  // Rayleigh amplitude with mean mu_h: scale mu_h * sqrt(2/pi), variance mu_h^2 (4/pi - 1).
  static ChannelModel rayleigh(double mu_h, double sigma_z_sq) {
    ChannelModel m{FadingKind::Rayleigh, mu_h, mu_h * mu_h * (4.0 / std::numbers::pi - 1.0), sigma_z_sq};
    m.validate();
    return m;
  }

  static ChannelModel gaussian_gain(double mu_h, double sigma_h_sq, double sigma_z_sq) {
    ChannelModel m{FadingKind::GaussianGain, mu_h, sigma_h_sq, sigma_z_sq};
    m.validate();
    return m;
  }

  double rayleigh_scale() const { return mu_h * std::sqrt(2.0 / std::numbers::pi); }

  void validate() const {
    detail::require(std::isfinite(mu_h), "channel: mu_h must be finite");
    detail::require(sigma_h_sq >= 0.0 && std::isfinite(sigma_h_sq), "channel: sigma_h_sq must be >= 0");
    detail::require(sigma_z_sq >= 0.0 && std::isfinite(sigma_z_sq), "channel: sigma_z_sq must be >= 0");
    if (fading == FadingKind::Constant) {
      detail::require(sigma_h_sq == 0.0, "channel: constant fading has zero variance");
    }
    if (fading == FadingKind::Rayleigh) {
      detail::require(mu_h > 0.0, "channel: rayleigh fading needs mu_h > 0");
    }
  }
};

struct ChannelDraw {
  std::vector<double> h;  // one gain per client
  CompressedVector xi;    // noise, length k
};

inline ChannelDraw sample_draw(const ChannelModel& model, std::size_t num_clients, std::size_t k, Rng& rng) {
  detail::require(num_clients >= 1, "sample_draw: need at least one client");
  detail::require(k >= 1, "sample_draw: k must be >= 1");
  ChannelDraw draw{std::vector<double>(num_clients, model.mu_h), CompressedVector(k)};

  switch (model.fading) {
    case FadingKind::Constant:
      break;
    case FadingKind::Rayleigh: {
      // Rayleigh(sigma) == Weibull(shape 2, scale sigma * sqrt(2)).
      std::weibull_distribution<double> dist(2.0, model.rayleigh_scale() * std::numbers::sqrt2);
      for (auto& h : draw.h) h = dist(rng);
      break;
    }
    case FadingKind::GaussianGain: {
      std::normal_distribution<double> dist(model.mu_h, std::sqrt(model.sigma_h_sq));
      for (auto& h : draw.h) h = dist(rng);
      break;
    }
  }

  if (model.sigma_z_sq > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(model.sigma_z_sq));
    for (auto& v : draw.xi.values()) v = noise(rng);
  }
  return draw;
}

// y = (1/N) sum_n h_n * g_n + xi, accumulated in client-index order.
inline CompressedVector aggregate(const ChannelDraw& draw, std::span<const CompressedVector> compressed) {
  const std::size_t n_clients = compressed.size();
  detail::require(n_clients >= 1, "aggregate: no client payloads");
  detail::require_same_dim(draw.h.size(), n_clients, "aggregate (clients)");
  const std::size_t k = draw.xi.dim();
  CompressedVector y(k);
  for (std::size_t n = 0; n < n_clients; ++n) {
    detail::require_same_dim(compressed[n].dim(), k, "aggregate (payload length)");
    for (std::size_t i = 0; i < k; ++i) y[i] += draw.h[n] * compressed[n][i];
  }
  const double inv_n = 1.0 / static_cast<double>(n_clients);
  for (std::size_t i = 0; i < k; ++i) y[i] = y[i] * inv_n + draw.xi[i];
  return y;
}

}  // namespace otafl
