#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "weanwave/common.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Search space description. Configs are JSON objects keyed by parameter name.
// ---------------------------------------------------------------------------

struct ParamSpec {
  enum class Type { kContinuous, kContinuousLog, kInteger, kCategorical };
  std::string name;
  Type type = Type::kContinuous;
  double lo = 0.0, hi = 0.0;  // numeric bounds, inclusive
  double step = 1.0;          // integer grid step
  std::vector<std::string> choices;

  static ParamSpec continuous(std::string name, double lo, double hi) {
    return {std::move(name), Type::kContinuous, lo, hi, 1.0, {}};
  }
  static ParamSpec log_continuous(std::string name, double lo, double hi) {
    return {std::move(name), Type::kContinuousLog, lo, hi, 1.0, {}};
  }
  static ParamSpec integer(std::string name, double lo, double hi,
                           double step = 1.0) {
    return {std::move(name), Type::kInteger, lo, hi, step, {}};
  }
  static ParamSpec categorical(std::string name,
                               std::vector<std::string> choices) {
    return {std::move(name), Type::kCategorical, 0, 0, 1.0, std::move(choices)};
  }

  std::size_t encoded_dims() const {
    return type == Type::kCategorical ? choices.size() : 1;
  }
  std::size_t integer_levels() const {
    return static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  }
};

struct SearchSpace {
  std::string name;
  std::vector<ParamSpec> params;

  std::size_t encoded_dims() const {
    std::size_t d = 0;
    for (const auto& p : params) d += p.encoded_dims();
    return d;
  }
};

// Hyperparameter space of the from-scratch classifier. One filter count is
// shared by all conv blocks and one width by all fully connected layers.
inline SearchSpace scratch_cnn_space() {
  SearchSpace s;
  s.name = "scratch_cnn";
  s.params = {ParamSpec::integer("n_conv", 2, 5),
              ParamSpec::categorical("conv_filters", {"32", "64", "128"}),
              ParamSpec::integer("n_fc", 1, 3),
              ParamSpec::categorical("fc_units", {"256", "512", "1024"}),
              ParamSpec::log_continuous("lr", 1e-6, 1e-3),
              ParamSpec::integer("batch", 10, 100)};
  return s;
}

// Space for the per-channel ensemble members: head width and optimizer.
inline SearchSpace channel_head_space() {
  SearchSpace s;
  s.name = "channel_head";
  s.params = {ParamSpec::integer("fc_units", 32, 512, 32),
              ParamSpec::categorical("optimizer", {"adam", "sgd"})};
  return s;
}

// ---------------------------------------------------------------------------
// Encoding to/from the unit cube.
// ---------------------------------------------------------------------------

namespace detail {

inline double clamp01(double z) { return std::clamp(z, 0.0, 1.0); }

inline std::vector<double> encode_config(const SearchSpace& space,
                                         const nlohmann::json& cfg) {
  std::vector<double> z;
  z.reserve(space.encoded_dims());
  for (const ParamSpec& p : space.params) {
    const nlohmann::json& v = cfg.at(p.name);
    switch (p.type) {
      case ParamSpec::Type::kContinuous:
        z.push_back(clamp01((v.get<double>() - p.lo) / (p.hi - p.lo)));
        break;
      case ParamSpec::Type::kContinuousLog:
        z.push_back(clamp01((std::log(v.get<double>()) - std::log(p.lo)) /
                            (std::log(p.hi) - std::log(p.lo))));
        break;
      case ParamSpec::Type::kInteger: {
        const std::size_t levels = p.integer_levels();
        const double idx = (v.get<double>() - p.lo) / p.step;
        z.push_back(levels > 1 ? clamp01(idx / static_cast<double>(levels - 1))
                               : 0.5);
        break;
      }
      case ParamSpec::Type::kCategorical: {
        const std::string s = v.get<std::string>();
        for (const std::string& c : p.choices) z.push_back(c == s ? 1.0 : 0.0);
        break;
      }
    }
  }
  return z;
}

inline nlohmann::json decode_point(const SearchSpace& space,
                                   const std::vector<double>& z) {
  nlohmann::json cfg = nlohmann::json::object();
  std::size_t d = 0;
  for (const ParamSpec& p : space.params) {
    switch (p.type) {
      case ParamSpec::Type::kContinuous:
        cfg[p.name] = p.lo + clamp01(z[d++]) * (p.hi - p.lo);
        break;
      case ParamSpec::Type::kContinuousLog:
        cfg[p.name] = std::exp(std::log(p.lo) +
                               clamp01(z[d++]) * (std::log(p.hi) - std::log(p.lo)));
        break;
      case ParamSpec::Type::kInteger: {
        const std::size_t levels = p.integer_levels();
        const double idx =
            std::round(clamp01(z[d++]) * static_cast<double>(levels - 1));
        cfg[p.name] = static_cast<std::int64_t>(std::llround(p.lo + idx * p.step));
        break;
      }
      case ParamSpec::Type::kCategorical: {
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.choices.size(); ++k)
          if (z[d + k] > z[d + best]) best = k;
        cfg[p.name] = p.choices[best];
        d += p.choices.size();
        break;
      }
    }
  }
  return cfg;
}

}  // namespace detail

// Uniform config draw; also serves as the random-search baseline generator.
inline nlohmann::json sample_uniform_config(const SearchSpace& space,
                                            Rng& rng) {
  std::vector<double> z(space.encoded_dims());
  for (double& v : z) v = rng.uniform();
  return detail::decode_point(space, z);
}

// ---------------------------------------------------------------------------
// Gaussian-process surrogate: Matern-5/2 kernel on the unit cube,
// standardized objectives, fixed hyperparameters, 1e-10 diagonal jitter.
// ---------------------------------------------------------------------------

namespace detail {

inline double matern52(double r, double ell) {
  const double q = std::sqrt(5.0) * r / ell;
  return (1.0 + q + q * q / 3.0) * std::exp(-q);
}

class GpSurrogate {
 public:
  GpSurrogate(const std::vector<std::vector<double>>& xs,
              const std::vector<double>& ys, double ell = 0.35,
              double jitter = 1e-10)
      : ell_(ell) {
    const std::size_t n = xs.size();
    x_ = Eigen::MatrixXd(n, xs[0].size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < xs[i].size(); ++j)
        x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];

    y_mean_ = 0.0;
    for (double y : ys) y_mean_ += y;
    y_mean_ /= static_cast<double>(n);
    double ss = 0.0;
    for (double y : ys) ss += (y - y_mean_) * (y - y_mean_);
    y_std_ = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (y_std_ <= 0.0) y_std_ = 1.0;

    Eigen::VectorXd yv(n);
    for (std::size_t i = 0; i < n; ++i)
      yv(static_cast<Eigen::Index>(i)) = (ys[i] - y_mean_) / y_std_;

    Eigen::MatrixXd k(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double r = (x_.row(static_cast<Eigen::Index>(i)) -
                          x_.row(static_cast<Eigen::Index>(j)))
                             .norm();
        k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                matern52(r, ell_);
      }
    k.diagonal().array() += jitter;
    llt_.compute(k);
    alpha_ = llt_.solve(yv);
  }

  // Posterior mean/stddev in the original objective units.
  void posterior(const std::vector<double>& z, double& mu, double& sd) const {
    const Eigen::Index n = x_.rows();
    Eigen::VectorXd kv(n);
    Eigen::Map<const Eigen::VectorXd> zq(z.data(),
                                         static_cast<Eigen::Index>(z.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      kv(i) = matern52((x_.row(i).transpose() - zq).norm(), ell_);
    const double mu_std = kv.dot(alpha_);
    const Eigen::VectorXd v = llt_.solve(kv);
    double var = 1.0 - kv.dot(v);
    var = std::max(var, 0.0);
    mu = y_mean_ + y_std_ * mu_std;
    sd = y_std_ * std::sqrt(var);
  }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double ell_, y_mean_ = 0.0, y_std_ = 1.0;
};

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Expected improvement over the incumbent for a maximization problem.
inline double expected_improvement(double mu, double sd, double best) {
  if (sd <= 0.0) return std::max(0.0, mu - best);
  const double g = (mu - best) / sd;
  return sd * (g * norm_cdf(g) + norm_pdf(g));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bayesian optimization driver.
// ---------------------------------------------------------------------------

struct Trial {
  std::size_t index = 0;
  nlohmann::json config;
  double objective = 0.0;  // failed trials enter as 0
  bool failed = false;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

inline constexpr std::size_t kBoInitialDesign = 5;
inline constexpr std::size_t kBoCandidates = 256;

// Proposes the next configuration given the evaluated history. Pure function
// of (space, history, seed): replaying the same history reproduces the same
// suggestion. The first kBoInitialDesign proposals form a seeded stratified
// design; afterwards a GP surrogate ranks seeded candidates by expected
// improvement, followed by a short local refinement around the best one.
inline nlohmann::json bo_suggest(const SearchSpace& space,
                                 const std::vector<Trial>& history,
                                 std::uint64_t seed) {
  if (space.params.empty()) throw InvalidArgument("empty search space");
  const std::size_t d = space.encoded_dims();
  const std::size_t t = history.size();

  if (t < kBoInitialDesign) {
    // Stratified start: dimension j uses its own derived stream to permute
    // the kBoInitialDesign strata and jitter within each.
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) {
      Rng rj(derive_seed(seed, 0xD1, j));
      std::vector<std::size_t> strata(kBoInitialDesign);
      for (std::size_t k = 0; k < strata.size(); ++k) strata[k] = k;
      rj.shuffle(strata);
      std::vector<double> jit(kBoInitialDesign);
      for (double& u : jit) u = rj.uniform();
      z[j] = (static_cast<double>(strata[t]) + jit[t]) /
             static_cast<double>(kBoInitialDesign);
    }
    return detail::decode_point(space, z);
  }

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  xs.reserve(t);
  ys.reserve(t);
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < t; ++i) {
    xs.push_back(detail::encode_config(space, history[i].config));
    ys.push_back(history[i].objective);
    if (history[i].objective > ys[best_i]) best_i = i;
  }
  const double y_best = ys[best_i];
  detail::GpSurrogate gp(xs, ys);

  Rng rng(derive_seed(seed, 0xB0, t));
  std::vector<double> best_z;
  double best_ei = -1.0;
  auto consider = [&](const std::vector<double>& z) {
    double mu, sd;
    gp.posterior(z, mu, sd);
    const double ei = detail::expected_improvement(mu, sd, y_best);
    if (ei > best_ei) {
      best_ei = ei;
      best_z = z;
    }
  };

  std::vector<double> z(d);
  for (std::size_t c = 0; c < kBoCandidates; ++c) {
    for (std::size_t j = 0; j < d; ++j) z[j] = rng.uniform();
    consider(z);
  }
  for (std::size_t c = 0; c < 32; ++c) {  // exploit around the incumbent
    for (std::size_t j = 0; j < d; ++j)
      z[j] = detail::clamp01(xs[best_i][j] + 0.1 * rng.normal());
    consider(z);
  }
  // Local refinement with shrinking steps.
  double sigma = 0.05;
  for (std::size_t it = 0; it < 20; ++it) {
    for (std::size_t j = 0; j < d; ++j)
      z[j] = detail::clamp01(best_z[j] + sigma * rng.normal());
    consider(z);
    sigma *= 0.92;
  }
  return detail::decode_point(space, best_z);
}

using TrialObjective =
    std::function<double(const nlohmann::json& config, Trial& annotate)>;

struct BoResult {
  std::vector<Trial> trials;
  nlohmann::json best_config;
  double best_objective = 0.0;
  std::size_t best_trial = 0;
};

// Runs exactly `budget` trials. A throwing objective marks the trial failed
// and records objective 0; optimization continues.
inline BoResult bo_run(const SearchSpace& space, const TrialObjective& objective,
                       std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw InvalidArgument("budget must be positive");
  BoResult res;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < budget; ++i) {
    Trial tr;
    tr.index = i;
    tr.config = bo_suggest(space, res.trials, seed);
    try {
      tr.objective = objective(tr.config, tr);
    } catch (const std::exception&) {
      tr.failed = true;
      tr.objective = 0.0;
    }
    if (tr.objective > best) {
      best = tr.objective;
      res.best_config = tr.config;
      res.best_objective = tr.objective;
      res.best_trial = i;
    }
    res.trials.push_back(std::move(tr));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Trial log.
// ---------------------------------------------------------------------------

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

inline void write_trials_csv(const std::vector<Trial>& trials,
                             std::uint64_t seed,
                             const std::filesystem::path& path,
                             const std::string& header_comment = "") {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!header_comment.empty()) f << "# " << header_comment << '\n';
  f << "trial,config_json,objective_tnr,epochs,seed,seconds\n";
  for (const Trial& t : trials)
    f << t.index << ',' << csv_quote(t.config.dump()) << ','
      << format_double(t.objective) << ',' << t.epochs << ',' << seed << ','
      << format_double(t.seconds) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace weanwave
