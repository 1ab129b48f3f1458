#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace otafl {

// Raised for any invalid parameter, dimension mismatch or malformed input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ConfigError(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                      " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

struct GradientTag {};
struct ParamsTag {};
struct CompressedTag {};

// Dense real vector. The tag keeps gradients, model parameters and the
// k-length over-the-air payload from being mixed up by accident.
template <class Tag>
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
  DenseVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> values_;
};

using GradientVector = DenseVector<GradientTag>;
using ModelParams = DenseVector<ParamsTag>;
using CompressedVector = DenseVector<CompressedTag>;

template <class Tag>
DenseVector<Tag> add(const DenseVector<Tag>& a, const DenseVector<Tag>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "add");
  DenseVector<Tag> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class Tag>
DenseVector<Tag> subtract(const DenseVector<Tag>& a, const DenseVector<Tag>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "subtract");
  DenseVector<Tag> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class Tag>
DenseVector<Tag> scale(const DenseVector<Tag>& a, double factor) {
  DenseVector<Tag> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * factor;
  return out;
}

template <class Tag>
DenseVector<Tag> elementwise_abs(const DenseVector<Tag>& a) {
  DenseVector<Tag> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = std::fabs(a[i]);
  return out;
}

template <class Tag>
double l2_norm_sq(const DenseVector<Tag>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

template <class Tag>
double dot(const DenseVector<Tag>& a, const DenseVector<Tag>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

// theta - eta * direction
inline ModelParams descend(const ModelParams& theta, double eta, const GradientVector& direction) {
  detail::require_same_dim(theta.dim(), direction.dim(), "descend");
  ModelParams out(theta.dim());
  for (std::size_t i = 0; i < theta.dim(); ++i) out[i] = theta[i] - eta * direction[i];
  return out;
}

// Per-coordinate rounds since the server last refreshed that coordinate.
class AgeVector {
 public:
  AgeVector() = default;
  explicit AgeVector(std::size_t dim) : ages_(dim, 0) {}
  explicit AgeVector(std::vector<std::uint64_t> ages) : ages_(std::move(ages)) {}
  AgeVector(std::initializer_list<std::uint64_t> ages) : ages_(ages) {}

  std::size_t dim() const noexcept { return ages_.size(); }
  std::uint64_t operator[](std::size_t i) const { return ages_[i]; }
  std::span<const std::uint64_t> values() const noexcept { return ages_; }

  std::uint64_t max() const noexcept {
    return ages_.empty() ? 0 : *std::max_element(ages_.begin(), ages_.end());
  }
  double mean() const noexcept {
    if (ages_.empty()) return 0.0;
    long double s = 0;
    for (auto a : ages_) s += a;
    return static_cast<double>(s / ages_.size());
  }

  friend bool operator==(const AgeVector&, const AgeVector&) = default;

 private:
  std::vector<std::uint64_t> ages_;
};

// k distinct coordinates out of d, kept in ascending order. Stands for both
// the diagonal selector S (d x d, S[j][j] = 1 iff j selected) and the compact
// selector S_hat (k x d, row i has its single 1 at column indices()[i]).
class SparseMask {
 public:
  SparseMask(std::size_t dim, std::vector<std::size_t> indices) : dim_(dim), indices_(std::move(indices)) {
    detail::require(dim_ >= 1, "mask: dimension must be positive");
    detail::require(!indices_.empty(), "mask: k must be positive");
    detail::require(indices_.size() <= dim_, "mask: k exceeds dimension");
    std::sort(indices_.begin(), indices_.end());
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      detail::require(indices_[i] < dim_, "mask: index " + std::to_string(indices_[i]) +
                                               " out of range for d=" + std::to_string(dim_));
      detail::require(i == 0 || indices_[i] != indices_[i - 1],
                      "mask: duplicate index " + std::to_string(indices_[i]));
    }
  }

  static SparseMask full(std::size_t dim) {
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return SparseMask(dim, std::move(all));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t k() const noexcept { return indices_.size(); }
  std::span<const std::size_t> indices() const noexcept { return indices_; }

  bool contains(std::size_t j) const {
    return std::binary_search(indices_.begin(), indices_.end(), j);
  }

  // Selection flags, i.e. the diagonal of S.
  std::vector<bool> selected() const {
    std::vector<bool> flags(dim_, false);
    for (auto j : indices_) flags[j] = true;
    return flags;
  }

  friend bool operator==(const SparseMask&, const SparseMask&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> indices_;
};

// S_hat * g
inline CompressedVector apply_mask(const SparseMask& mask, const GradientVector& g) {
  detail::require_same_dim(mask.dim(), g.dim(), "apply_mask");
  CompressedVector out(mask.k());
  const auto idx = mask.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = g[idx[i]];
  return out;
}

// S_hat^T * y
inline GradientVector scatter(const SparseMask& mask, const CompressedVector& y) {
  detail::require_same_dim(mask.k(), y.dim(), "scatter");
  GradientVector out(mask.dim());
  const auto idx = mask.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = y[i];
  return out;
}

}  // namespace otafl
