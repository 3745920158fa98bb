#include "survbench/relieff.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace survbench {

FeatureWeights relieff_weights(const MatrixXd& features, std::span<const int> class_labels,
                               int k_neighbors, std::uint64_t seed) {
  const auto n = features.rows();
  const auto p = features.cols();
  if (static_cast<Eigen::Index>(class_labels.size()) != n) {
    throw Error("dimension_mismatch", "class labels must have one entry per row");
  }
  if (!features.allFinite()) throw Error("non_finite", "features must be finite");
  if (k_neighbors < 1) throw Error("invalid_argument", "k_neighbors must be at least 1");
  std::size_t n_pos = 0;
  for (int c : class_labels) {
    if (c != 0 && c != 1) throw Error("invalid_argument", "class labels must be 0 or 1");
    n_pos += c == 1 ? 1 : 0;
  }
  const std::size_t n_neg = static_cast<std::size_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("single_class", "ReliefF needs both classes present");
  const auto k = static_cast<std::size_t>(k_neighbors);
  if (k + 1 > std::min(n_pos, n_neg)) {
    throw Error("k_too_large", "k_neighbors must be smaller than the smaller class size (" +
                                   std::to_string(std::min(n_pos, n_neg)) + ")");
  }

  // Range normalization; zero-range columns become all-zero (diff == 0).
  MatrixXd z(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double lo = features.col(j).minCoeff();
    const double range = features.col(j).maxCoeff() - lo;
    if (range > 0.0) {
      z.col(j) = (features.col(j).array() - lo) / range;
    } else {
      z.col(j).setZero();
    }
  }
  const VectorXd sq = z.rowwise().squaredNorm();
  MatrixXd dist = (-2.0 * z * z.transpose()).colwise() + sq;
  dist.rowwise() += sq.transpose();

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FeatureWeights out;
  out.weights = VectorXd::Zero(p);
  out.m_samples = static_cast<std::size_t>(n);
  out.k_neighbors = k_neighbors;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(k));

  std::vector<std::size_t> hits;
  std::vector<std::size_t> misses;
  VectorXd delta(p);
  for (auto target : order) {
    const auto t = static_cast<Eigen::Index>(target);
    hits.clear();
    misses.clear();
    for (std::size_t o = 0; o < static_cast<std::size_t>(n); ++o) {
      if (o == target) continue;
      (class_labels[o] == class_labels[target] ? hits : misses).push_back(o);
    }
    auto nearer = [&](std::size_t a, std::size_t b) {
      const double da = dist(t, static_cast<Eigen::Index>(a));
      const double db = dist(t, static_cast<Eigen::Index>(b));
      return da < db || (da == db && a < b);
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), nearer);
    std::partial_sort(misses.begin(), misses.begin() + static_cast<std::ptrdiff_t>(k), misses.end(), nearer);
    delta.setZero();
    for (std::size_t i = 0; i < k; ++i) {
      delta -= (z.row(t) - z.row(static_cast<Eigen::Index>(hits[i]))).cwiseAbs().transpose();
      delta += (z.row(t) - z.row(static_cast<Eigen::Index>(misses[i]))).cwiseAbs().transpose();
    }
    out.weights += norm * delta;
  }
  return out;
}

std::vector<std::size_t> top_m(const FeatureWeights& w, std::size_t m) {
  const auto p = static_cast<std::size_t>(w.weights.size());
  if (m > p) {
    throw Error("invalid_argument", "cannot select " + std::to_string(m) + " of " +
                                        std::to_string(p) + " features");
  }
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return w.weights[static_cast<Eigen::Index>(a)] > w.weights[static_cast<Eigen::Index>(b)];
  });
  idx.resize(m);
  return idx;
}

}  // namespace survbench
