#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "otafl/model_state.hpp"
#include "otafl/rng.hpp"

namespace otafl {

// m samples of p features each, row-major, with integer labels in [0, num_classes).
struct Dataset {
  std::size_t p = 0;
  std::size_t num_classes = 1;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * p, p}; }

  void validate() const {
    detail::require(p >= 1, "dataset: feature dimension must be positive");
    detail::require(num_classes >= 1, "dataset: class count must be positive");
    detail::require(features.size() == labels.size() * p, "dataset: feature/label count mismatch");
    for (int y : labels) {
      detail::require(y >= 0 && static_cast<std::size_t>(y) < num_classes,
                      "dataset: label " + std::to_string(y) + " out of range");
    }
  }
};

inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out{data.p, data.num_classes, {}, {}};
  out.features.reserve(rows.size() * data.p);
  out.labels.reserve(rows.size());
  for (auto i : rows) {
    auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

namespace detail {

// Turns logits into softmax probabilities in place; returns -log p(label).
inline double softmax_xent(std::span<double> z, int label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  const double label_logit = z[static_cast<std::size_t>(label)];
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  const double lse = zmax + std::log(sum);
  for (auto& v : z) v /= sum;
  return lse - label_logit;
}

inline void check_task_input(std::size_t task_dim, std::size_t theta_dim, std::size_t task_p,
                             const Dataset& data) {
  require_same_dim(task_dim, theta_dim, "task parameters");
  require_same_dim(task_p, data.p, "task features");
  require(data.size() >= 1, "task: empty dataset");
}

}  // namespace detail

// Each sample x is a target point: l(theta; x) = 0.5 (theta - x)^T A (theta - x).
// A client holding the single sample b_n therefore has f_n = 0.5 (theta - b_n)^T A (theta - b_n).
struct QuadraticTask {
  std::size_t d = 0;
  std::vector<double> A;  // d x d, symmetric PSD, row-major

  std::size_t dim() const noexcept { return d; }

  static QuadraticTask identity(std::size_t d) {
    QuadraticTask t{d, std::vector<double>(d * d, 0.0)};
    for (std::size_t i = 0; i < d; ++i) t.A[i * d + i] = 1.0;
    return t;
  }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += A[i * d + j] * v[j];
      out[i] = s;
    }
    return out;
  }

  double loss(const ModelParams& theta, const Dataset& data) const {
    detail::check_task_input(d, theta.dim(), d, data);
    std::vector<double> diff(d);
    double total = 0.0;
    for (std::size_t s = 0; s < data.size(); ++s) {
      auto x = data.row(s);
      for (std::size_t i = 0; i < d; ++i) diff[i] = theta[i] - x[i];
      auto Ad = apply(diff);
      total += 0.5 * std::inner_product(diff.begin(), diff.end(), Ad.begin(), 0.0);
    }
    return total / static_cast<double>(data.size());
  }

  GradientVector gradient(const ModelParams& theta, const Dataset& data) const {
    detail::check_task_input(d, theta.dim(), d, data);
    std::vector<double> diff(d, 0.0);
    for (std::size_t s = 0; s < data.size(); ++s) {
      auto x = data.row(s);
      for (std::size_t i = 0; i < d; ++i) diff[i] += theta[i] - x[i];
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : diff) v *= inv;
    return GradientVector(apply(diff));
  }
};

// Multinomial logistic regression. Parameters are the (p+1) x C matrix W,
// row-major, whose row 0 is the bias: logits_c = W[0][c] + sum_f x_f W[f+1][c].
struct LogisticTask {
  std::size_t p = 0;
  std::size_t num_classes = 2;
  double l2 = 0.0;

  std::size_t dim() const noexcept { return (p + 1) * num_classes; }

  void logits(const ModelParams& theta, std::span<const double> x, std::span<double> out) const {
    const std::size_t C = num_classes;
    for (std::size_t c = 0; c < C; ++c) out[c] = theta[c];
    for (std::size_t f = 0; f < p; ++f) {
      const double xf = x[f];
      const std::size_t base = (f + 1) * C;
      for (std::size_t c = 0; c < C; ++c) out[c] += xf * theta[base + c];
    }
  }

  double loss(const ModelParams& theta, const Dataset& data) const;
  GradientVector gradient(const ModelParams& theta, const Dataset& data) const;
};

// One tanh hidden layer. Layout: W1 (p x H), b1 (H), W2 (H x C), b2 (C), all row-major.
struct MlpTask {
  std::size_t p = 0;
  std::size_t hidden = 8;
  std::size_t num_classes = 2;

  std::size_t dim() const noexcept { return p * hidden + hidden + hidden * num_classes + num_classes; }

  std::size_t w1() const noexcept { return 0; }
  std::size_t b1() const noexcept { return p * hidden; }
  std::size_t w2() const noexcept { return b1() + hidden; }
  std::size_t b2() const noexcept { return w2() + hidden * num_classes; }

  void forward(const ModelParams& theta, std::span<const double> x, std::span<double> act,
               std::span<double> out) const {
    for (std::size_t h = 0; h < hidden; ++h) act[h] = theta[b1() + h];
    for (std::size_t f = 0; f < p; ++f) {
      const double xf = x[f];
      for (std::size_t h = 0; h < hidden; ++h) act[h] += xf * theta[w1() + f * hidden + h];
    }
    for (std::size_t h = 0; h < hidden; ++h) act[h] = std::tanh(act[h]);
    for (std::size_t c = 0; c < num_classes; ++c) out[c] = theta[b2() + c];
    for (std::size_t h = 0; h < hidden; ++h) {
      for (std::size_t c = 0; c < num_classes; ++c) out[c] += act[h] * theta[w2() + h * num_classes + c];
    }
  }

  double loss(const ModelParams& theta, const Dataset& data) const;
  GradientVector gradient(const ModelParams& theta, const Dataset& data) const;
};

using Task = std::variant<QuadraticTask, LogisticTask, MlpTask>;

inline double LogisticTask::loss(const ModelParams& theta, const Dataset& data) const {
  detail::check_task_input(dim(), theta.dim(), p, data);
  std::vector<double> z(num_classes);
  double total = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    logits(theta, data.row(s), z);
    total += detail::softmax_xent(z, data.labels[s]);
  }
  double out = total / static_cast<double>(data.size());
  if (l2 > 0.0) out += 0.5 * l2 * l2_norm_sq(theta);
  return out;
}

inline GradientVector LogisticTask::gradient(const ModelParams& theta, const Dataset& data) const {
  detail::check_task_input(dim(), theta.dim(), p, data);
  const std::size_t C = num_classes;
  GradientVector g(dim());
  std::vector<double> z(C);
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto x = data.row(s);
    logits(theta, x, z);
    detail::softmax_xent(z, data.labels[s]);
    z[static_cast<std::size_t>(data.labels[s])] -= 1.0;
    for (std::size_t c = 0; c < C; ++c) g[c] += z[c];
    for (std::size_t f = 0; f < p; ++f) {
      const double xf = x[f];
      const std::size_t base = (f + 1) * C;
      for (std::size_t c = 0; c < C; ++c) g[base + c] += xf * z[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < g.dim(); ++i) g[i] = g[i] * inv + l2 * theta[i];
  return g;
}

inline double MlpTask::loss(const ModelParams& theta, const Dataset& data) const {
  detail::check_task_input(dim(), theta.dim(), p, data);
  std::vector<double> act(hidden), z(num_classes);
  double total = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    forward(theta, data.row(s), act, z);
    total += detail::softmax_xent(z, data.labels[s]);
  }
  return total / static_cast<double>(data.size());
}

inline GradientVector MlpTask::gradient(const ModelParams& theta, const Dataset& data) const {
  detail::check_task_input(dim(), theta.dim(), p, data);
  const std::size_t C = num_classes;
  GradientVector g(dim());
  std::vector<double> act(hidden), z(C), dact(hidden);
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto x = data.row(s);
    forward(theta, x, act, z);
    detail::softmax_xent(z, data.labels[s]);
    z[static_cast<std::size_t>(data.labels[s])] -= 1.0;
    for (std::size_t c = 0; c < C; ++c) g[b2() + c] += z[c];
    for (std::size_t h = 0; h < hidden; ++h) {
      double back = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        g[w2() + h * C + c] += act[h] * z[c];
        back += theta[w2() + h * C + c] * z[c];
      }
      dact[h] = back * (1.0 - act[h] * act[h]);
      g[b1() + h] += dact[h];
    }
    for (std::size_t f = 0; f < p; ++f) {
      const double xf = x[f];
      for (std::size_t h = 0; h < hidden; ++h) g[w1() + f * hidden + h] += xf * dact[h];
    }
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < g.dim(); ++i) g[i] *= inv;
  return g;
}

inline std::size_t task_dim(const Task& task) {
  return std::visit([](const auto& t) { return t.dim(); }, task);
}

inline bool is_classifier(const Task& task) { return !std::holds_alternative<QuadraticTask>(task); }

// Mean per-sample loss on one client's data.
inline double local_loss(const Task& task, const ModelParams& theta, const Dataset& data) {
  return std::visit([&](const auto& t) { return t.loss(theta, data); }, task);
}

// Full-batch gradient of local_loss.
inline GradientVector local_gradient(const Task& task, const ModelParams& theta, const Dataset& data) {
  return std::visit([&](const auto& t) { return t.gradient(theta, data); }, task);
}

// Unweighted mean over clients, regardless of how many samples each holds.
inline double global_loss(const Task& task, const ModelParams& theta, std::span<const Dataset> partitions) {
  detail::require(!partitions.empty(), "global_loss: no partitions");
  double total = 0.0;
  for (const auto& part : partitions) total += local_loss(task, theta, part);
  return total / static_cast<double>(partitions.size());
}

inline GradientVector global_gradient(const Task& task, const ModelParams& theta,
                                      std::span<const Dataset> partitions) {
  detail::require(!partitions.empty(), "global_gradient: no partitions");
  GradientVector g(task_dim(task));
  for (const auto& part : partitions) g = add(g, local_gradient(task, theta, part));
  return scale(g, 1.0 / static_cast<double>(partitions.size()));
}

inline std::size_t predict(const Task& task, const ModelParams& theta, std::span<const double> x) {
  return std::visit(
      [&](const auto& t) -> std::size_t {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, QuadraticTask>) {
          throw ConfigError("predict: quadratic task has no classes");
        } else {
          std::vector<double> z(t.num_classes);
          if constexpr (std::is_same_v<T, LogisticTask>) {
            t.logits(theta, x, z);
          } else {
            std::vector<double> act(t.hidden);
            t.forward(theta, x, act, z);
          }
          return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        }
      },
      task);
}

inline double accuracy(const Task& task, const ModelParams& theta, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    if (predict(task, theta, data.row(s)) == static_cast<std::size_t>(data.labels[s])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct PartitionSpec {
  double alpha = 0.3;
  std::size_t num_clients = 20;
};

// Row indices per client. Each class is split across clients with
// proportions drawn from Dir(alpha, ..., alpha); a client left empty takes
// the last row of the currently largest client (lowest index on ties).
inline std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const Dataset& data,
                                                                         const PartitionSpec& spec, Rng& rng) {
  const std::size_t N = spec.num_clients;
  detail::require(spec.alpha > 0.0 && std::isfinite(spec.alpha), "dirichlet_partition: alpha must be > 0");
  detail::require(N >= 1, "dirichlet_partition: need at least one client");
  detail::require(data.size() >= N, "dirichlet_partition: " + std::to_string(data.size()) +
                                        " samples cannot cover " + std::to_string(N) + " clients");

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  std::vector<std::vector<std::size_t>> clients(N);
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  std::vector<double> share(N);
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    std::shuffle(rows.begin(), rows.end(), rng);
    double total = 0.0;
    for (auto& q : share) total += (q = gamma(rng));
    if (!(total > 0.0)) {
      // every gamma draw underflowed: put the whole class on one client
      std::fill(share.begin(), share.end(), 0.0);
      share[pick(rng)] = 1.0;
      total = 1.0;
    }
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t n = 0; n < N; ++n) {
      cum += share[n];
      std::size_t stop = n + 1 == N ? rows.size()
                                    : std::min(rows.size(), static_cast<std::size_t>(std::llround(
                                                                cum / total * static_cast<double>(rows.size()))));
      stop = std::max(stop, start);
      clients[n].insert(clients[n].end(), rows.begin() + static_cast<std::ptrdiff_t>(start),
                        rows.begin() + static_cast<std::ptrdiff_t>(stop));
      start = stop;
    }
  }

  for (auto& client : clients) {
    if (!client.empty()) continue;
    auto largest = std::max_element(clients.begin(), clients.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    client.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& client : clients) std::sort(client.begin(), client.end());
  return clients;
}

inline std::vector<Dataset> dirichlet_partition(const Dataset& data, const PartitionSpec& spec, Rng& rng) {
  std::vector<Dataset> out;
  for (const auto& rows : dirichlet_partition_indices(data, spec, rng)) out.push_back(subset(data, rows));
  return out;
}

// Balanced Gaussian class clusters: class c is centered at separation * u_c
// for a random unit vector u_c, with identity covariance.
inline Dataset gen_synthetic(std::size_t p, std::size_t num_classes, std::size_t m, double separation, Rng& rng) {
  detail::require(p >= 1 && num_classes >= 1 && m >= 1, "gen_synthetic: sizes must be positive");
  detail::require(separation >= 0.0, "gen_synthetic: separation must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centers(num_classes * p);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    for (std::size_t f = 0; f < p; ++f) {
      double v = normal(rng);
      centers[c * p + f] = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t f = 0; f < p; ++f) {
      centers[c * p + f] = norm > 0.0 ? separation * centers[c * p + f] / norm : 0.0;
    }
  }

  std::vector<int> labels(m);
  for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<int>(i % num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset data{p, num_classes, std::vector<double>(m * p), labels};
  for (std::size_t i = 0; i < m; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t f = 0; f < p; ++f) data.features[i * p + f] = centers[c * p + f] + normal(rng);
  }
  return data;
}

// Seeded split into (train, test); test gets floor(test_fraction * m) rows.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, Rng& rng) {
  detail::require(test_fraction >= 0.0 && test_fraction < 1.0, "train_test_split: fraction must be in [0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {subset(data, train), subset(data, test)};
}

struct QuadraticProblem {
  QuadraticTask task;
  std::vector<Dataset> clients;  // one target row b_n = b + delta_n each
};

// A = M^T M / (2d) for Gaussian M (2d x d); b ~ N(0, I); delta_n ~ N(0, spread^2 I).
inline QuadraticProblem gen_quadratic(std::size_t d, std::size_t num_clients, double spread, Rng& rng) {
  detail::require(d >= 1 && num_clients >= 1, "gen_quadratic: sizes must be positive");
  detail::require(spread >= 0.0, "gen_quadratic: spread must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t rows = 2 * d;
  std::vector<double> M(rows * d);
  for (auto& v : M) v = normal(rng);

  QuadraticProblem prob{{d, std::vector<double>(d * d, 0.0)}, {}};
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += M[r * d + i] * M[r * d + j];
      s /= static_cast<double>(rows);
      prob.task.A[i * d + j] = s;
      prob.task.A[j * d + i] = s;
    }
  }

  std::vector<double> b(d);
  for (auto& v : b) v = normal(rng);
  for (std::size_t n = 0; n < num_clients; ++n) {
    Dataset client{d, 1, std::vector<double>(d), {0}};
    for (std::size_t i = 0; i < d; ++i) client.features[i] = b[i] + spread * normal(rng);
    prob.clients.push_back(std::move(client));
  }
  return prob;
}

// Text format: first line "p C"; then one sample per line with p feature
// columns followed by an integer label. Commas, semicolons and whitespace all
// separate fields; '#' starts a comment.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  detail::require(in.good(), "load_dataset: cannot open " + path);
  Dataset data;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace_if(line.begin(), line.end(), [](char ch) { return ch == ',' || ch == ';'; }, ' ');
    std::istringstream fields(line);
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) {
      throw ConfigError("load_dataset: " + path + ":" + std::to_string(lineno) + ": malformed field");
    }
    if (values.empty()) continue;
    if (!have_header) {
      detail::require(values.size() == 2 && values[0] >= 1 && values[1] >= 1,
                      "load_dataset: " + path + ": header must be 'p C'");
      data.p = static_cast<std::size_t>(values[0]);
      data.num_classes = static_cast<std::size_t>(values[1]);
      have_header = true;
      continue;
    }
    detail::require(values.size() == data.p + 1, "load_dataset: " + path + ":" + std::to_string(lineno) +
                                                      ": expected " + std::to_string(data.p + 1) + " fields");
    const double label = values.back();
    detail::require(label == std::floor(label), "load_dataset: " + path + ":" + std::to_string(lineno) +
                                                    ": label must be an integer");
    data.features.insert(data.features.end(), values.begin(), values.end() - 1);
    data.labels.push_back(static_cast<int>(label));
  }
  detail::require(have_header, "load_dataset: " + path + ": missing header");
  detail::require(data.size() >= 1, "load_dataset: " + path + ": no samples");
  data.validate();
  return data;
}

}  // namespace otafl
