#include "survbench/bayes_opt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include <json.hpp>

namespace survbench {

ParamSpace::ParamSpace(std::vector<ParamDim> dims) : dims_(std::move(dims)) {
  for (const auto& d : dims_) {
    if (!(d.lower < d.upper)) {
      throw Error("invalid_space", "dimension '" + d.name + "' needs lower < upper");
    }
    if (d.kind == DimKind::kLogContinuous && !(d.lower > 0.0)) {
      throw Error("invalid_space", "log dimension '" + d.name + "' needs lower > 0");
    }
  }
}

std::size_t ParamSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].name == name) return i;
  }
  throw Error("invalid_space", "unknown dimension: " + name);
}

std::vector<double> ParamSpace::decode(const VectorXd& unit) const {
  if (static_cast<std::size_t>(unit.size()) != dims_.size()) {
    throw Error("dimension_mismatch", "unit point has wrong dimension");
  }
  std::vector<double> out(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const double u = std::clamp(unit[static_cast<Eigen::Index>(i)], 0.0, 1.0);
    double v = 0.0;
    switch (d.kind) {
      case DimKind::kContinuous:
        v = d.lower + u * (d.upper - d.lower);
        break;
      case DimKind::kLogContinuous:
        v = std::exp(std::log(d.lower) + u * (std::log(d.upper) - std::log(d.lower)));
        break;
      case DimKind::kInteger:
        v = std::round(d.lower + u * (d.upper - d.lower));
        break;
    }
    out[i] = std::clamp(v, d.lower, d.upper);
  }
  return out;
}

VectorXd ParamSpace::encode(const std::vector<double>& values) const {
  if (values.size() != dims_.size()) throw Error("dimension_mismatch", "parameter vector has wrong dimension");
  VectorXd out(static_cast<Eigen::Index>(dims_.size()));
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const double v = std::clamp(values[i], d.lower, d.upper);
    double u = 0.0;
    if (d.kind == DimKind::kLogContinuous) {
      u = (std::log(v) - std::log(d.lower)) / (std::log(d.upper) - std::log(d.lower));
    } else {
      u = (v - d.lower) / (d.upper - d.lower);
    }
    out[static_cast<Eigen::Index>(i)] = std::clamp(u, 0.0, 1.0);
  }
  return out;
}

std::size_t TrialHistory::incumbent() const {
  if (trials.empty()) throw Error("empty_history", "no trials recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < trials.size(); ++i) {
    if (trials[i].objective > trials[best].objective) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Gaussian process

double matern52(double distance, double length_scale, double signal_variance) {
  const double r = std::sqrt(5.0) * distance / length_scale;
  return signal_variance * (1.0 + r + r * r / 3.0) * std::exp(-r);
}

GaussianProcess::GaussianProcess(std::vector<VectorXd> x, std::vector<double> y, GpHyperparams hp)
    : x_(std::move(x)), hp_(hp) {
  const auto n = static_cast<Eigen::Index>(x_.size());
  if (n == 0 || y.size() != x_.size()) throw Error("invalid_argument", "GP needs matching x and y");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  y_mean_ = mean;
  y_scale_ = sd > 1e-12 ? sd : 1.0;

  VectorXd ys(n);
  for (Eigen::Index i = 0; i < n; ++i) ys[i] = (y[static_cast<std::size_t>(i)] - y_mean_) / y_scale_;

  MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d = (x_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(j)]).norm();
      k(i, j) = k(j, i) = matern52(d, hp_.length_scale, hp_.signal_variance);
    }
  }
  k.diagonal().array() += hp_.noise_variance;
  // Duplicate points make K singular; escalate a diagonal jitter from 1e-8.
  Eigen::LLT<MatrixXd> llt(k);
  double jitter = 1e-8;
  while (llt.info() != Eigen::Success && jitter < 1e-2) {
    MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
    jitter *= 10.0;
  }
  if (llt.info() != Eigen::Success) throw Error("gp_failure", "GP covariance is not positive definite");
  chol_l_ = llt.matrixL();
  alpha_ = llt.solve(ys);
  log_marginal_ = -0.5 * ys.dot(alpha_) - chol_l_.diagonal().array().log().sum() -
                  0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GaussianProcess GaussianProcess::fit(std::vector<VectorXd> x, std::vector<double> y,
                                     double noise_variance) {
  static constexpr std::array<double, 9> kLengths{0.05, 0.1, 0.15, 0.25, 0.4, 0.6, 0.9, 1.4, 2.0};
  static constexpr std::array<double, 5> kVariances{0.25, 0.5, 1.0, 2.0, 4.0};
  std::optional<GaussianProcess> best;
  for (double ell : kLengths) {
    for (double var : kVariances) {
      GaussianProcess gp(x, y, GpHyperparams{ell, var, noise_variance});
      if (!best || gp.log_marginal_likelihood() > best->log_marginal_likelihood()) best = std::move(gp);
    }
  }
  return std::move(*best);
}

GaussianProcess::Posterior GaussianProcess::posterior(const VectorXd& query) const {
  const auto n = static_cast<Eigen::Index>(x_.size());
  VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ks[i] = matern52((x_[static_cast<std::size_t>(i)] - query).norm(), hp_.length_scale, hp_.signal_variance);
  }
  const VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(ks);
  Posterior out;
  out.mean = y_mean_ + y_scale_ * ks.dot(alpha_);
  out.variance = std::max(0.0, (hp_.signal_variance - v.squaredNorm()) * y_scale_ * y_scale_);
  return out;
}

namespace {

std::vector<VectorXd> trial_points(const TrialHistory& h) {
  std::vector<VectorXd> x;
  for (const auto& t : h.trials) x.push_back(t.unit);
  return x;
}

std::vector<double> trial_values(const TrialHistory& h) {
  std::vector<double> y;
  for (const auto& t : h.trials) y.push_back(t.objective);
  return y;
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

constexpr std::array<std::uint64_t, 24> kPrimes{2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                                41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

}  // namespace

GaussianProcess::Posterior gp_posterior(const TrialHistory& history, const VectorXd& query) {
  if (history.empty()) throw Error("empty_history", "GP posterior needs at least one trial");
  return GaussianProcess::fit(trial_points(history), trial_values(history)).posterior(query);
}

double expected_improvement(double mean, double variance, double best_so_far) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  const double improvement = mean - best_so_far;
  if (sigma <= 0.0) return std::max(improvement, 0.0);
  const double z = improvement / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, improvement * cdf + sigma * pdf);
}

VectorXd suggest(const TrialHistory& history, const ParamSpace& space, std::uint64_t seed,
                 const SuggestOptions& options) {
  const auto d = static_cast<Eigen::Index>(space.size());
  const std::size_t n = history.trials.size();

  if (n < static_cast<std::size_t>(options.n_initial) || d == 0) {
    // Halton sequence with a seeded Cranley-Patterson rotation.
    std::mt19937_64 shift_rng(derive_seed(seed, 0x4a170aULL));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    VectorXd u(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double shift = unif(shift_rng);
      double v = 0.0;
      if (static_cast<std::size_t>(j) < kPrimes.size()) {
        v = radical_inverse(n + 1, kPrimes[static_cast<std::size_t>(j)]) + shift;
        v -= std::floor(v);
      } else {
        v = unif(shift_rng);
      }
      u[j] = v;
    }
    return u;
  }

  const auto gp = GaussianProcess::fit(trial_points(history), trial_values(history));
  const auto& incumbent = history.trials[history.incumbent()];
  const double best = incumbent.objective;

  std::mt19937_64 rng(derive_seed(seed, n + 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  static constexpr std::array<double, 3> kLocalScales{0.2, 0.05, 0.01};

  VectorXd best_point;
  double best_ei = -1.0;
  double best_var = -1.0;
  VectorXd c(d);
  const int total = options.n_candidates + options.n_local;
  for (int i = 0; i < total; ++i) {
    if (i < options.n_candidates) {
      for (Eigen::Index j = 0; j < d; ++j) c[j] = unif(rng);
    } else {
      const double scale = kLocalScales[static_cast<std::size_t>(i) % kLocalScales.size()];
      for (Eigen::Index j = 0; j < d; ++j) {
        c[j] = std::clamp(incumbent.unit[j] + scale * normal(rng), 0.0, 1.0);
      }
    }
    const auto post = gp.posterior(c);
    const double ei = expected_improvement(post.mean, post.variance, best);
    if (ei > best_ei || (ei == best_ei && ei <= 0.0 && post.variance > best_var)) {
      best_ei = ei;
      best_var = post.variance;
      best_point = c;
    }
  }
  return best_point;
}

OptimizeResult optimize(const Objective& objective, const ParamSpace& space, int n_rounds,
                        std::uint64_t seed, TrialHistory resume, const SuggestOptions& options) {
  if (n_rounds < 1) throw Error("invalid_argument", "n_rounds must be at least 1");
  OptimizeResult out;
  out.history = std::move(resume);
  for (int round = 0; round < n_rounds; ++round) {
    const VectorXd raw = suggest(out.history, space, seed, options);
    Trial trial;
    trial.params = space.decode(raw);
    trial.unit = space.encode(trial.params);
    double value = objective(trial.params);
    if (!std::isfinite(value)) {
      out.warnings.push_back("non-finite objective at round " + std::to_string(round) +
                             "; recorded as 0.0");
      value = 0.0;
    }
    trial.objective = value;
    out.history.trials.push_back(std::move(trial));
  }
  const auto& best = out.history.trials[out.history.incumbent()];
  out.best_params = best.params;
  out.best_objective = best.objective;
  return out;
}

std::string history_to_json(const TrialHistory& history, const ParamSpace& space) {
  nlohmann::json doc;
  auto trials = nlohmann::json::array();
  for (const auto& t : history.trials) {
    nlohmann::json params;
    for (std::size_t i = 0; i < space.size(); ++i) params[space.dims()[i].name] = t.params[i];
    trials.push_back({{"unit", std::vector<double>(t.unit.data(), t.unit.data() + t.unit.size())},
                      {"params", params},
                      {"objective", t.objective}});
  }
  doc["trials"] = std::move(trials);
  if (!history.empty()) doc["incumbent"] = history.incumbent();
  return doc.dump(2);
}

TrialHistory history_from_json(const std::string& text, const ParamSpace& space) {
  const auto doc = nlohmann::json::parse(text);
  TrialHistory h;
  for (const auto& t : doc.at("trials")) {
    Trial trial;
    const auto unit = t.at("unit").get<std::vector<double>>();
    if (unit.size() != space.size()) throw Error("invalid_history", "trial dimension mismatch");
    trial.unit = Eigen::Map<const VectorXd>(unit.data(), static_cast<Eigen::Index>(unit.size()));
    for (const auto& d : space.dims()) trial.params.push_back(t.at("params").at(d.name).get<double>());
    trial.objective = t.at("objective").get<double>();
    h.trials.push_back(std::move(trial));
  }
  return h;
}

}  // namespace survbench
