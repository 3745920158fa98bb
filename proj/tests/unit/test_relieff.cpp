#include <doctest.h>

#include <random>

#include "survbench/relieff.hpp"

using namespace survbench;

namespace {

// Straight transcription of the update rule: every row is a target, k nearest
// hits and misses by Euclidean distance on range-normalized features, ties
// broken by row index.
VectorXd relieff_by_hand(const MatrixXd& x, const std::vector<int>& y, int k) {
  const auto n = x.rows(), p = x.cols();
  MatrixXd z = x;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double lo = x.col(j).minCoeff(), hi = x.col(j).maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = hi > lo ? (x(i, j) - lo) / (hi - lo) : 0.0;
  }
  VectorXd w = VectorXd::Zero(p);
  for (Eigen::Index t = 0; t < n; ++t) {
    std::vector<std::pair<double, Eigen::Index>> hits, misses;
    for (Eigen::Index o = 0; o < n; ++o) {
      if (o == t) continue;
      double d = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) d += (z(t, j) - z(o, j)) * (z(t, j) - z(o, j));
      (y[static_cast<std::size_t>(o)] == y[static_cast<std::size_t>(t)] ? hits : misses).emplace_back(d, o);
    }
    std::sort(hits.begin(), hits.end());
    std::sort(misses.begin(), misses.end());
    for (int i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        w[j] -= std::abs(z(t, j) - z(hits[static_cast<std::size_t>(i)].second, j)) / static_cast<double>(n * k);
        w[j] += std::abs(z(t, j) - z(misses[static_cast<std::size_t>(i)].second, j)) / static_cast<double>(n * k);
      }
    }
  }
  return w;
}

struct Problem {
  MatrixXd x;
  std::vector<int> y;
};

Problem separable(int n, int noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Problem pr;
  pr.x.resize(n, noise + 1);
  pr.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    pr.y[static_cast<std::size_t>(i)] = i % 2;
    pr.x(i, 0) = i % 2;
    for (int j = 1; j <= noise; ++j) pr.x(i, j) = z(rng);
  }
  return pr;
}

}  // namespace

TEST_SUITE("relieff") {
  TEST_CASE("six-row instance by hand") {
    const MatrixXd x{{0, 0.3, 5}, {0, 0.9, 5}, {0, 0.1, 5}, {1, 0.4, 5}, {1, 0.8, 5}, {1, 0.2, 5}};
    const std::vector<int> y = {0, 0, 0, 1, 1, 1};
    const auto w = relieff_weights(x, y, 1, 3);
    const VectorXd ref = relieff_by_hand(x, y, 1);
    CHECK((w.weights - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(w.weights[0] == w.weights.maxCoeff());
    CHECK(w.weights[2] == 0.0);
  }

  TEST_CASE("matches the hand transcription on random data") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    MatrixXd x(40, 5);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 5; ++j) x(i, j) = z(rng);
      y[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * z(rng) > 0;
    }
    const auto w = relieff_weights(x, y, 4, 1);
    CHECK((w.weights - relieff_by_hand(x, y, 4)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.weights.array().abs() <= 1.0).all());
  }

  TEST_CASE("separating feature ranks first") {
    int first = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto pr = separable(300, 50, seed);
      first += top_m(relieff_weights(pr.x, pr.y, 10, seed), 1)[0] == 0 ? 1 : 0;
    }
    CHECK(first >= 19);
  }

  TEST_CASE("permuted labels give weights near zero") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto pr = separable(200, 5, seed);
      std::shuffle(pr.y.begin(), pr.y.end(), std::mt19937_64(seed + 100));
      pr.x.col(0) = VectorXd::Random(200);
      const auto w = relieff_weights(pr.x, pr.y, 10, seed);
      CHECK(w.weights.cwiseAbs().maxCoeff() < 0.1);
    }
  }

  TEST_CASE("equivariance, scale invariance and determinism") {
    auto pr = separable(80, 4, 2);
    pr.x.col(0) += VectorXd::Random(80) * 0.3;
    const auto w = relieff_weights(pr.x, pr.y, 5, 7);
    CHECK(relieff_weights(pr.x, pr.y, 5, 7).weights == w.weights);

    const std::vector<Eigen::Index> perm = {3, 0, 4, 1, 2};
    MatrixXd xp(80, 5);
    for (int j = 0; j < 5; ++j) xp.col(j) = pr.x.col(perm[static_cast<std::size_t>(j)]);
    const auto wp = relieff_weights(xp, pr.y, 5, 7);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(wp.weights[j] - w.weights[perm[static_cast<std::size_t>(j)]]) < 1e-12);

    MatrixXd xs = pr.x;
    xs.col(2) *= 37.5;
    CHECK((relieff_weights(xs, pr.y, 5, 7).weights - w.weights).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("top m") {
    FeatureWeights w;
    w.weights = VectorXd{{0.5, 0.1, 0.9}};
    CHECK(top_m(w, 2) == std::vector<std::size_t>{2, 0});
    CHECK(top_m(w, 3) == std::vector<std::size_t>{2, 0, 1});
    w.weights = VectorXd{{0.3, 0.3}};
    CHECK(top_m(w, 1) == std::vector<std::size_t>{0});
  }

  TEST_CASE("errors") {
    const MatrixXd x = MatrixXd::Random(6, 2);
    CHECK_THROWS_AS(relieff_weights(x, std::vector<int>(6, 1), 1, 0), Error);
    CHECK_THROWS_AS(relieff_weights(x, std::vector<int>{0, 0, 0, 1, 1, 1}, 3, 0), Error);
  }
}
