#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "otafl/bound_analysis.hpp"
#include "otafl/fl_task.hpp"
#include "otafl/ota_channel.hpp"
#include "otafl/rng.hpp"
#include "otafl/server_loop.hpp"
#include "otafl/sparsifier.hpp"

namespace otafl {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { Quadratic, Logistic, Mlp };

inline std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Quadratic: return "quadratic";
    case TaskKind::Logistic: return "logistic";
    case TaskKind::Mlp: return "mlp";
  }
  return "unknown";
}

// Raw, unvalidated settings: config-file entries with command-line overrides on top.
using KeyValues = std::map<std::string, std::string>;

// Every recognised key, in echo order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "strategy", "rho_r",      "rho_k",      "task",     "d",         "p",         "classes",
      "hidden",   "samples",    "separation", "l2",       "test_fraction", "data_file", "spread",
      "clients",  "alpha",      "rounds",     "eta",      "theta0_scale",  "fading",    "mu_h",
      "sigma_h_sq", "sigma_z_sq", "beta",     "seed",     "threads",   "out"};
  return keys;
}

// Values used when neither the config file nor a flag sets the key.
inline const KeyValues& config_defaults() {
  static const KeyValues defaults = {
      {"strategy", "agetopk"}, {"rho_r", "0.3"},       {"rho_k", "0.2"},      {"task", "logistic"},
      {"p", "99"},             {"classes", "10"},      {"hidden", "16"},      {"samples", "2500"},
      {"separation", "3"},     {"l2", "0"},            {"test_fraction", "0.2"}, {"data_file", ""},
      {"spread", "1"},         {"clients", "20"},      {"alpha", "0.3"},      {"eta", "0.1"},
      {"theta0_scale", "0.01"}, {"fading", "rayleigh"}, {"mu_h", "1"},        {"sigma_h_sq", "0"},
      {"sigma_z_sq", "0.0001"}, {"beta", "1"},         {"threads", "1"},      {"out", ""}};
  return defaults;
}

struct RunConfig {
  StrategyKind strategy = StrategyKind::AgeTopK;
  double rho_r = 0.3;
  double rho_k = 0.2;
  std::size_t d = 0;
  std::size_t r = 0;
  std::size_t k = 0;

  TaskKind task = TaskKind::Logistic;
  std::size_t p = 99;
  std::size_t classes = 10;
  std::size_t hidden = 16;
  std::size_t samples = 2500;
  double separation = 3.0;
  double l2 = 0.0;
  double test_fraction = 0.2;
  std::string data_file;
  double spread = 1.0;

  std::size_t clients = 20;
  double alpha = 0.3;

  std::size_t rounds = 0;
  double eta = 0.1;
  double theta0_scale = 0.01;

  FadingKind fading = FadingKind::Rayleigh;
  double mu_h = 1.0;
  double sigma_h_sq = 0.0;
  double sigma_z_sq = 1e-4;

  double beta = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;

  // The settings this config was resolved from, with defaults filled in.
  KeyValues source;

  Strategy make_strategy() const { return Strategy::make(strategy, d, r, k); }

  ChannelModel make_channel() const {
    switch (fading) {
      case FadingKind::Constant: return ChannelModel::constant(mu_h, sigma_z_sq);
      case FadingKind::Rayleigh: return ChannelModel::rayleigh(mu_h, sigma_z_sq);
      case FadingKind::GaussianGain: return ChannelModel::gaussian_gain(mu_h, sigma_h_sq, sigma_z_sq);
    }
    throw ConfigError("unknown fading kind");
  }
};

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ConfigError("invalid value for '" + key + "': '" + text + "' (expected a real number)");
  }
  return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  const bool negative = !text.empty() && text.front() == '-';
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (negative || used == 0 || used != text.size()) {
    throw ConfigError("invalid value for '" + key + "': '" + text + "' (expected a non-negative integer)");
  }
  return v;
}

// floor(rho * d); the slack absorbs binary rounding of ratios such as 0.29 * 100.
inline std::size_t ratio_count(double rho, std::size_t d) {
  return static_cast<std::size_t>(std::floor(rho * static_cast<double>(d) + 1e-9));
}

}  // namespace detail

// Reads `key = value` lines; '#' starts a comment. Unknown keys are rejected.
inline KeyValues parse_config_text(std::string_view text, const std::string& origin = "<config>") {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = config_keys();
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = detail::trim(std::string_view(line).substr(0, eq));
    const auto value = detail::trim(std::string_view(line).substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + ": unknown config key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

inline KeyValues parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

// Validates settings and derives d, r = floor(rho_r d), k = floor(rho_k d).
inline RunConfig resolve_config(const KeyValues& given) {
  KeyValues kv = config_defaults();
  const auto& keys = config_keys();
  for (const auto& [key, value] : given) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    kv[key] = value;
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) throw ConfigError("missing required config key '" + key + "'");
    return it->second;
  };
  auto real = [&](const std::string& key) { return detail::parse_real(key, need(key)); };
  auto count = [&](const std::string& key) { return static_cast<std::size_t>(detail::parse_count(key, need(key))); };

  RunConfig c;
  if (auto s = parse_strategy(need("strategy"))) {
    c.strategy = *s;
  } else {
    throw ConfigError("invalid value for 'strategy': '" + kv["strategy"] +
                      "' (expected agetopk, topk, randomk, agek or rtopk)");
  }
  const auto& task = need("task");
  if (task == "quadratic") c.task = TaskKind::Quadratic;
  else if (task == "logistic") c.task = TaskKind::Logistic;
  else if (task == "mlp") c.task = TaskKind::Mlp;
  else throw ConfigError("invalid value for 'task': '" + task + "' (expected quadratic, logistic or mlp)");

  if (auto f = parse_fading(need("fading"))) {
    c.fading = *f;
  } else {
    throw ConfigError("invalid value for 'fading': '" + kv["fading"] + "' (expected rayleigh, constant or gaussian)");
  }

  c.rho_r = real("rho_r");
  c.rho_k = real("rho_k");
  c.p = count("p");
  c.classes = count("classes");
  c.hidden = count("hidden");
  c.samples = count("samples");
  c.separation = real("separation");
  c.l2 = real("l2");
  c.test_fraction = real("test_fraction");
  c.data_file = kv["data_file"];
  c.spread = real("spread");
  c.clients = count("clients");
  c.alpha = real("alpha");
  c.rounds = count("rounds");
  c.eta = real("eta");
  c.theta0_scale = real("theta0_scale");
  c.mu_h = real("mu_h");
  c.sigma_h_sq = real("sigma_h_sq");
  c.sigma_z_sq = real("sigma_z_sq");
  c.beta = real("beta");
  c.seed = detail::parse_count("seed", need("seed"));
  c.threads = count("threads");
  c.out = kv["out"];

  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(c.rho_r > 0.0 && c.rho_r <= 1.0, "'rho_r' must be in (0, 1]");
  check(c.rho_k > 0.0 && c.rho_k <= 1.0, "'rho_k' must be in (0, 1]");
  check(c.clients >= 1, "'clients' must be >= 1");
  check(c.alpha > 0.0, "'alpha' must be > 0");
  check(c.eta > 0.0, "'eta' must be > 0");
  check(c.theta0_scale >= 0.0, "'theta0_scale' must be >= 0");
  check(c.sigma_z_sq >= 0.0, "'sigma_z_sq' must be >= 0");
  check(c.sigma_h_sq >= 0.0, "'sigma_h_sq' must be >= 0");
  check(c.beta >= 1.0, "'beta' must be >= 1");
  check(c.threads >= 1, "'threads' must be >= 1");
  check(c.test_fraction >= 0.0 && c.test_fraction < 1.0, "'test_fraction' must be in [0, 1)");
  check(c.l2 >= 0.0, "'l2' must be >= 0");
  check(c.spread >= 0.0, "'spread' must be >= 0");
  check(c.separation >= 0.0, "'separation' must be >= 0");
  if (c.fading != FadingKind::GaussianGain) {
    check(c.sigma_h_sq == 0.0, "'sigma_h_sq' is only configurable with fading = gaussian");
  }
  if (c.fading == FadingKind::Rayleigh) check(c.mu_h > 0.0, "'mu_h' must be > 0 for rayleigh fading");

  if (c.task != TaskKind::Quadratic && !c.data_file.empty()) {
    const auto data = load_dataset(c.data_file);
    if (given.count("p")) check(c.p == data.p, "'p' disagrees with the header of " + c.data_file);
    if (given.count("classes")) {
      check(c.classes == data.num_classes, "'classes' disagrees with the header of " + c.data_file);
    }
    c.p = data.p;
    c.classes = data.num_classes;
  }

  std::size_t derived = 0;
  switch (c.task) {
    case TaskKind::Quadratic:
      derived = count("d");
      check(derived >= 1, "'d' must be >= 1");
      break;
    case TaskKind::Logistic:
      check(c.p >= 1 && c.classes >= 2, "logistic task needs p >= 1 and classes >= 2");
      derived = LogisticTask{c.p, c.classes, c.l2}.dim();
      break;
    case TaskKind::Mlp:
      check(c.p >= 1 && c.classes >= 2 && c.hidden >= 1, "mlp task needs p, hidden >= 1 and classes >= 2");
      derived = MlpTask{c.p, c.hidden, c.classes}.dim();
      break;
  }
  if (c.task != TaskKind::Quadratic && kv.count("d") && !kv["d"].empty()) {
    check(count("d") == derived, "'d' = " + kv["d"] + " disagrees with the task's parameter count " +
                                     std::to_string(derived));
  }
  c.d = derived;

  const bool uses_candidates = c.strategy == StrategyKind::AgeTopK || c.strategy == StrategyKind::RTopK;
  if (uses_candidates) {
    check(c.rho_k <= c.rho_r, "'rho_k' (" + kv["rho_k"] + ") must not exceed 'rho_r' (" + kv["rho_r"] + ")");
  }
  c.k = detail::ratio_count(c.rho_k, c.d);
  c.r = detail::ratio_count(c.rho_r, c.d);
  check(c.k >= 1, "floor(rho_k * d) = 0: transmit count must be >= 1");
  if (!uses_candidates) c.r = std::max(c.r, c.k);
  check(c.r >= c.k, "floor(rho_r * d) < floor(rho_k * d)");
  const auto s = c.make_strategy();
  c.r = s.r;
  c.k = s.k;
  c.make_channel();

  c.source = kv;
  return c;
}

// `# key = value` lines for every setting, then the derived sizes.
inline std::string config_echo(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& key : config_keys()) {
    auto it = c.source.find(key);
    os << "# " << key << " = " << (it == c.source.end() ? "" : it->second) << "\n";
  }
  os << "# derived d = " << c.d << "\n";
  os << "# derived r = " << c.r << "\n";
  os << "# derived k = " << c.k << "\n";
  return os.str();
}

// A fully materialised run: federation, evaluation sets, initial model, RNG.
struct Experiment {
  RunConfig config;
  Federation federation;
  Dataset train;
  Dataset test;
  ModelParams theta0;
};

// Independent streams per concern, so that every strategy run with the same
// seed sees the same data, partition, initial model and channel draws.
enum SeedStream : std::uint64_t { kDataStream = 1, kPartitionStream = 2, kInitStream = 3, kRunStream = 4 };

inline Experiment build_experiment(const RunConfig& c) {
  Experiment ex{c, {}, {}, {}, {}};
  Rng data_rng(derive_seed(c.seed, kDataStream));
  Rng part_rng(derive_seed(c.seed, kPartitionStream));
  Rng init_rng(derive_seed(c.seed, kInitStream));

  Federation& fed = ex.federation;
  fed.channel = c.make_channel();
  fed.eta = c.eta;
  fed.threads = c.threads;

  if (c.task == TaskKind::Quadratic) {
    auto prob = gen_quadratic(c.d, c.clients, c.spread, data_rng);
    fed.task = std::move(prob.task);
    fed.clients = std::move(prob.clients);
  } else {
    Dataset all = c.data_file.empty() ? gen_synthetic(c.p, c.classes, c.samples, c.separation, data_rng)
                                      : load_dataset(c.data_file);
    auto [train, test] = train_test_split(all, c.test_fraction, data_rng);
    fed.clients = dirichlet_partition(train, PartitionSpec{c.alpha, c.clients}, part_rng);
    ex.train = std::move(train);
    ex.test = std::move(test);
    if (c.task == TaskKind::Logistic) fed.task = LogisticTask{c.p, c.classes, c.l2};
    else fed.task = MlpTask{c.p, c.hidden, c.classes};
  }
  fed.strategy = c.make_strategy();
  ex.theta0 = gaussian_init(c.d, c.theta0_scale, init_rng);
  return ex;
}

inline Evaluator make_evaluator(const Experiment& ex) {
  if (!is_classifier(ex.federation.task)) return {};
  return [&ex](const ModelParams& theta, RoundRecord& rec) {
    rec.train_accuracy = accuracy(ex.federation.task, theta, ex.train);
    rec.test_accuracy = ex.test.size() ? accuracy(ex.federation.task, theta, ex.test)
                                       : std::numeric_limits<double>::quiet_NaN();
  };
}

// Algorithm run for the resolved config; T records unless it diverged.
inline RunResult run(const Experiment& ex) {
  Rng rng(derive_seed(ex.config.seed, kRunStream));
  auto state = init_state(ex.federation.strategy, ex.theta0, rng);
  return simulate(std::move(state), ex.federation, ex.config.rounds, rng, make_evaluator(ex));
}

inline RunResult run(const RunConfig& c) { return run(build_experiment(c)); }

inline constexpr std::string_view kMetricsHeader =
    "round,global_loss,grad_norm_sq,train_accuracy,test_accuracy,max_age,mean_age";

inline std::string metrics_row(const RoundRecord& r) {
  std::ostringstream os;
  os << r.round << ',' << format_real(r.global_loss) << ',' << format_real(r.grad_norm_sq) << ','
     << format_real(r.train_accuracy) << ',' << format_real(r.test_accuracy) << ',' << r.max_age << ','
     << format_real(r.mean_age);
  return os.str();
}

// Header block, one row per completed round, an abort marker if the run
// diverged, and the wall time as a trailing comment.
inline std::string metrics_document(const RunConfig& c, const RunResult& result, double wall_ms) {
  std::ostringstream os;
  os << "# otafl run\n" << config_echo(c) << kMetricsHeader << "\n";
  for (const auto& r : result.records) {
    if (r.aborted) {
      os << "# ABORTED round=" << r.round << " reason=" << r.diagnostic << "\n";
    } else {
      os << metrics_row(r) << "\n";
    }
  }
  os << "# wall_ms = " << format_real(wall_ms) << "\n";
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

struct SingleRunOutcome {
  RunResult result;
  double wall_ms = 0.0;
};

inline SingleRunOutcome run_single(const RunConfig& c) {
  if (c.out.empty()) throw ConfigError("missing required config key 'out'");
  const auto t0 = std::chrono::steady_clock::now();
  auto result = run(c);
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_text(c.out, metrics_document(c, result, wall_ms));
  return {std::move(result), wall_ms};
}

struct SweepSpec {
  KeyValues base;
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
};

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;
};

inline SummaryStat summarize(std::span<const double> xs) {
  SummaryStat s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct SweepRow {
  std::string value;
  std::size_t runs = 0;
  std::size_t aborted = 0;
  SummaryStat final_loss;
  SummaryStat final_grad_norm_sq;
  SummaryStat final_train_accuracy;
  SummaryStat final_test_accuracy;
};

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = detail::trim(text.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

// One row per axis value: mean and sample standard deviation of the final
// round's metrics across seeds. Seed s reuses the single-run seeding, so runs
// sharing a seed share data, partition and channel draws.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  const auto& keys = config_keys();
  if (std::find(keys.begin(), keys.end(), spec.axis) == keys.end() || spec.axis == "seed" || spec.axis == "out") {
    throw ConfigError("sweep axis '" + spec.axis + "' is not a sweepable config key");
  }
  if (spec.values.empty()) throw ConfigError("sweep needs at least one axis value");
  if (spec.seeds.empty()) throw ConfigError("sweep needs at least one seed");

  struct Job {
    RunConfig config;
    RoundRecord last;
    bool aborted = false;
  };
  std::vector<Job> jobs;
  for (const auto& value : spec.values) {
    for (auto seed : spec.seeds) {
      KeyValues kv = spec.base;
      kv[spec.axis] = value;
      kv["seed"] = std::to_string(seed);
      jobs.push_back({resolve_config(kv), {}, false});
    }
  }

  detail::parallel_for(jobs.size(), spec.jobs, [&](std::size_t i) {
    auto result = run(jobs[i].config);
    jobs[i].aborted = result.aborted;
    if (!result.records.empty()) jobs[i].last = result.records.back();
  });

  std::vector<SweepRow> rows;
  const std::size_t per_value = spec.seeds.size();
  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    SweepRow row;
    row.value = spec.values[v];
    std::vector<double> loss, grad, train, test;
    for (std::size_t s = 0; s < per_value; ++s) {
      const auto& job = jobs[v * per_value + s];
      ++row.runs;
      if (job.aborted) {
        ++row.aborted;
        continue;
      }
      loss.push_back(job.last.global_loss);
      grad.push_back(job.last.grad_norm_sq);
      train.push_back(job.last.train_accuracy);
      test.push_back(job.last.test_accuracy);
    }
    row.final_loss = summarize(loss);
    row.final_grad_norm_sq = summarize(grad);
    row.final_train_accuracy = summarize(train);
    row.final_test_accuracy = summarize(test);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sweep_document(const SweepSpec& spec, const RunConfig& base, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "# otafl sweep\n" << config_echo(base);
  os << "# axis = " << spec.axis << "\n# seeds =";
  for (auto s : spec.seeds) os << ' ' << s;
  os << "\n";
  os << spec.axis
     << ",runs,aborted,final_loss_mean,final_loss_std,final_grad_norm_sq_mean,final_grad_norm_sq_std,"
        "final_train_accuracy_mean,final_train_accuracy_std,final_test_accuracy_mean,final_test_accuracy_std\n";
  for (const auto& r : rows) {
    os << r.value << ',' << r.runs << ',' << r.aborted << ',' << format_real(r.final_loss.mean) << ','
       << format_real(r.final_loss.stddev) << ',' << format_real(r.final_grad_norm_sq.mean) << ','
       << format_real(r.final_grad_norm_sq.stddev) << ',' << format_real(r.final_train_accuracy.mean) << ','
       << format_real(r.final_train_accuracy.stddev) << ',' << format_real(r.final_test_accuracy.mean) << ','
       << format_real(r.final_test_accuracy.stddev) << "\n";
  }
  return os.str();
}

struct BoundCheckRow {
  std::size_t T = 0;
  double empirical_mean = 0.0;  // seed average of (1/T) sum_{t<T} ||grad f(theta_t)||^2
  double std_error = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

struct BoundCheckReport {
  BoundConstants constants;
  std::vector<BoundCheckRow> rows;
  std::size_t replicates = 0;
};

// Seed-averaged check of the convergence bound on a quadratic task. The
// problem instance comes from the config seed; replicate i re-draws the
// initial model and all channel randomness. L and f* are exact; G^2 and
// sigma_g^2 are maxima over every model visited by any replicate.
inline BoundCheckReport run_bound_check(const RunConfig& c, std::vector<std::size_t> checkpoints,
                                        std::size_t replicates) {
  if (c.task != TaskKind::Quadratic) {
    throw ConfigError("bound-check requires task = quadratic (smoothness is only exact there)");
  }
  detail::require(!checkpoints.empty(), "bound-check: need at least one checkpoint");
  detail::require(replicates >= 1, "bound-check: need at least one replicate");
  std::sort(checkpoints.begin(), checkpoints.end());
  detail::require(checkpoints.front() >= 1, "bound-check: checkpoints must be >= 1");
  const std::size_t horizon = checkpoints.back();

  const Experiment ex = build_experiment(c);
  const auto& fed = ex.federation;
  std::vector<std::vector<double>> grad_series(replicates);
  std::vector<double> f0(replicates);
  std::vector<double> g_sq(replicates, 0.0), het(replicates, 0.0);
  std::vector<bool> aborted(replicates, false);

  detail::parallel_for(replicates, c.threads, [&](std::size_t i) {
    Rng init_rng(derive_seed(c.seed, 1000 + 2 * i));
    Rng run_rng(derive_seed(c.seed, 1001 + 2 * i));
    auto theta0 = gaussian_init(c.d, c.theta0_scale, init_rng);
    f0[i] = global_loss(fed.task, theta0, fed.clients);
    g_sq[i] = gradient_energy(fed.task, fed.clients, theta0);
    het[i] = heterogeneity(fed.task, fed.clients, theta0);
    Federation serial = fed;
    serial.threads = 1;
    auto state = init_state(serial.strategy, std::move(theta0), run_rng);
    auto result = simulate(std::move(state), serial, horizon, run_rng, [&](const ModelParams& theta, RoundRecord&) {
      g_sq[i] = std::max(g_sq[i], gradient_energy(serial.task, serial.clients, theta));
      het[i] = std::max(het[i], heterogeneity(serial.task, serial.clients, theta));
    });
    aborted[i] = result.aborted;
    for (const auto& r : result.records) grad_series[i].push_back(r.grad_norm_sq);
  });
  for (std::size_t i = 0; i < replicates; ++i) {
    if (aborted[i]) throw std::runtime_error("bound-check: replicate " + std::to_string(i) + " diverged");
  }

  BoundCheckReport report;
  report.replicates = replicates;
  BoundConstants& k = report.constants;
  Rng est_rng(derive_seed(c.seed, 999));
  const ModelParams probe = ex.theta0;
  const auto est = estimate_constants(fed.task, fed.clients, std::span<const ModelParams>(&probe, 1), est_rng);
  const auto channel = c.make_channel();
  k.L = est.L;
  k.f_star = est.f_star;
  k.G_sq = *std::max_element(g_sq.begin(), g_sq.end());
  k.sigma_g_sq = *std::max_element(het.begin(), het.end());
  k.mu_h = channel.mu_h;
  k.sigma_h_sq = channel.sigma_h_sq;
  k.sigma_z_sq = channel.sigma_z_sq;
  k.gamma = gamma_of(c.d, fed.strategy.r, fed.strategy.k, c.beta).gamma;
  k.k = fed.strategy.k;
  k.N = c.clients;
  k.eta = c.eta;
  k.f0 = std::accumulate(f0.begin(), f0.end(), 0.0) / static_cast<double>(replicates);

  for (auto T : checkpoints) {
    std::vector<double> means(replicates);
    for (std::size_t i = 0; i < replicates; ++i) {
      means[i] = std::accumulate(grad_series[i].begin(), grad_series[i].begin() + static_cast<std::ptrdiff_t>(T), 0.0) /
                 static_cast<double>(T);
    }
    const auto stat = summarize(means);
    BoundCheckRow row;
    row.T = T;
    row.empirical_mean = stat.mean;
    row.std_error = stat.stddev / std::sqrt(static_cast<double>(replicates));
    row.rhs = bound_rhs(k, T);
    row.pass = row.empirical_mean + 2.0 * row.std_error <= row.rhs;
    report.rows.push_back(row);
  }
  return report;
}

inline std::string bound_check_document(const RunConfig& c, const BoundCheckReport& rep) {
  std::ostringstream os;
  const auto& k = rep.constants;
  os << "# otafl bound-check\n" << config_echo(c);
  os << "# replicates = " << rep.replicates << "\n";
  os << "# L = " << format_real(k.L) << "\n# G_sq = " << format_real(k.G_sq) << "\n# sigma_g_sq = "
     << format_real(k.sigma_g_sq) << "\n# mu_h = " << format_real(k.mu_h) << "\n# sigma_h_sq = "
     << format_real(k.sigma_h_sq) << "\n# sigma_z_sq = " << format_real(k.sigma_z_sq) << "\n# gamma = "
     << format_real(k.gamma) << "\n# f0 = " << format_real(k.f0) << "\n# f_star = " << format_real(k.f_star)
     << "\n# B1 = " << format_real(compute_B1(k)) << "\n# B2 = " << format_real(compute_B2(k)) << "\n";
  os << "T,empirical_mean,std_error,bound_rhs,pass\n";
  for (const auto& r : rep.rows) {
    os << r.T << ',' << format_real(r.empirical_mean) << ',' << format_real(r.std_error) << ','
       << format_real(r.rhs) << ',' << (r.pass ? "pass" : "fail") << "\n";
  }
  return os.str();
}

}  // namespace otafl
