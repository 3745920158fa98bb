#include "survbench/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace survbench {

namespace {

void require_events(std::span<const int> event) {
  if (std::find(event.begin(), event.end(), 1) == event.end()) {
    throw Error("no_events", "no events in dataset");
  }
}

}  // namespace

CoxDerivatives partial_log_likelihood_derivatives(const VectorXd& beta, const MatrixXd& x,
                                                  const VectorXd& time, std::span<const int> event,
                                                  bool with_hessian) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (beta.size() != p) throw Error("dimension_mismatch", "beta length does not match features");
  if (time.size() != n || static_cast<Eigen::Index>(event.size()) != n) {
    throw Error("dimension_mismatch", "time/event length does not match feature rows");
  }
  if (!beta.allFinite()) throw Error("non_finite", "beta contains non-finite values");
  require_events(event);

  const VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return time[a] > time[b]; });

  CoxDerivatives out;
  out.gradient = VectorXd::Zero(p);
  if (with_hessian) out.hessian = MatrixXd::Zero(p, p);

  double s0 = 0.0;
  VectorXd s1 = VectorXd::Zero(p);
  MatrixXd s2 = MatrixXd::Zero(with_hessian ? p : 0, with_hessian ? p : 0);
  std::size_t g = 0;
  const auto un = static_cast<std::size_t>(n);
  while (g < un) {
    std::size_t end = g;
    while (end < un && time[order[end]] == time[order[g]]) ++end;
    // The risk set at this time includes every row tied with it.
    for (std::size_t i = g; i < end; ++i) {
      const auto r = order[i];
      const double w = std::exp(eta[r] - shift);
      s0 += w;
      s1.noalias() += w * x.row(r).transpose();
      if (with_hessian) s2.noalias() += w * x.row(r).transpose() * x.row(r);
    }
    int d = 0;
    VectorXd xsum = VectorXd::Zero(p);
    double eta_sum = 0.0;
    for (std::size_t i = g; i < end; ++i) {
      const auto r = order[i];
      if (event[static_cast<std::size_t>(r)] != 1) continue;
      ++d;
      xsum += x.row(r).transpose();
      eta_sum += eta[r];
    }
    if (d > 0) {
      const double dd = d;
      const VectorXd mean = s1 / s0;
      out.log_likelihood += eta_sum - dd * (std::log(s0) + shift);
      out.gradient += xsum - dd * mean;
      if (with_hessian) out.hessian -= dd * (s2 / s0 - mean * mean.transpose());
    }
    g = end;
  }
  return out;
}

double partial_log_likelihood(const VectorXd& beta, const SurvivalDataset& ds) {
  return partial_log_likelihood_derivatives(beta, ds.features, ds.time, ds.event, false)
      .log_likelihood;
}

double CoxModel::predict_risk(const VectorXd& x) const {
  if (x.size() != beta.size()) {
    throw Error("dimension_mismatch", "feature vector length " + std::to_string(x.size()) +
                                          " does not match model (" + std::to_string(beta.size()) + ")");
  }
  return x.dot(beta);
}

VectorXd CoxModel::predict_risk(const MatrixXd& x) const {
  if (x.cols() != beta.size()) {
    throw Error("dimension_mismatch", "feature matrix width does not match model");
  }
  return x * beta;
}

CoxModel fit_cox(const SurvivalDataset& ds, const CoxFitOptions& options) {
  ds.validate();
  require_events(ds.event);
  const auto n = ds.n_rows();
  const auto p = ds.n_features();

  CoxModel model;
  model.feature_names = ds.feature_names;
  if (n <= p) {
    model.warnings.push_back("n_rows (" + std::to_string(n) + ") <= n_features (" +
                             std::to_string(p) + "); fit may be unstable");
  }

  const VectorXd mean = ds.features.colwise().mean();
  VectorXd scale(p);
  MatrixXd z = ds.features.rowwise() - mean.transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = n > 1 ? std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n - 1)) : 0.0;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean[j])))) {
      throw Error("constant_feature", "constant/collinear feature: " + ds.feature_names[static_cast<std::size_t>(j)]);
    }
    scale[j] = sd;
    z.col(j) /= sd;
  }
  if (p > 1) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      throw Error("collinear_features", "constant/collinear feature set (rank " +
                                            std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");
    }
  }

  VectorXd beta = VectorXd::Zero(p);
  auto current = partial_log_likelihood_derivatives(beta, z, ds.time, ds.event);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    model.n_iterations = iter;
    if (current.gradient.lpNorm<Eigen::Infinity>() < options.tol) {
      model.converged = true;
      model.n_iterations = iter - 1;
      break;
    }
    // Newton direction on the concave log-likelihood: solve (-H) step = g.
    const MatrixXd info = -current.hessian;
    Eigen::LDLT<MatrixXd> ldlt(info);
    VectorXd step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      step = ldlt.solve(current.gradient);
    }
    if (step.size() != p || !step.allFinite()) {
      model.warnings.push_back("information matrix not positive definite at iteration " +
                               std::to_string(iter));
      break;
    }

    bool improved = false;
    VectorXd candidate;
    CoxDerivatives next;
    for (int h = 0; h <= options.max_halvings; ++h) {
      candidate = beta + step;
      next = partial_log_likelihood_derivatives(candidate, z, ds.time, ds.event);
      if (std::isfinite(next.log_likelihood) && next.log_likelihood >= current.log_likelihood) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      model.warnings.push_back("step halving failed at iteration " + std::to_string(iter));
      break;
    }
    if (candidate.lpNorm<Eigen::Infinity>() > options.separation_bound) {
      throw Error("separation", "separation detected: |beta| exceeded " +
                                    std::to_string(options.separation_bound));
    }
    const double change = (candidate - beta).lpNorm<Eigen::Infinity>();
    beta = candidate;
    current = std::move(next);
    if (change < options.tol || current.gradient.lpNorm<Eigen::Infinity>() < options.tol) {
      model.converged = true;
      break;
    }
  }

  model.beta = beta.cwiseQuotient(scale);
  model.final_gradient_norm =
      partial_log_likelihood_derivatives(model.beta, ds.features, ds.time, ds.event, false)
          .gradient.lpNorm<Eigen::Infinity>();
  return model;
}

std::string cox_to_json(const CoxModel& model) {
  nlohmann::json doc;
  doc["model"] = "cox";
  doc["feature_names"] = model.feature_names;
  doc["beta"] = std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size());
  doc["converged"] = model.converged;
  doc["n_iterations"] = model.n_iterations;
  doc["final_gradient_norm"] = model.final_gradient_norm;
  return doc.dump(2);
}

CoxModel cox_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  CoxModel model;
  model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  const auto beta = doc.at("beta").get<std::vector<double>>();
  model.beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  model.converged = doc.at("converged").get<bool>();
  model.n_iterations = doc.at("n_iterations").get<int>();
  model.final_gradient_norm = doc.value("final_gradient_norm", 0.0);
  if (model.feature_names.size() != beta.size()) {
    throw Error("invalid_model", "beta length does not match feature_names");
  }
  return model;
}

}  // namespace survbench
