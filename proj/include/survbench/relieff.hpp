#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "survbench/common.hpp"

namespace survbench {

struct FeatureWeights {
  VectorXd weights;
  std::size_t m_samples = 0;
  int k_neighbors = 0;
};

/// ReliefF for a binary class. Every row is visited once as a target (order
/// drawn from `seed`); neighbours are found by Euclidean distance on
/// range-normalized features and diff is the absolute range-normalized
/// difference, so each weight lies in [-1, 1].
FeatureWeights relieff_weights(const MatrixXd& features, std::span<const int> class_labels,
                               int k_neighbors, std::uint64_t seed);

/// Indices of the m largest weights, descending; ties go to the lower index.
std::vector<std::size_t> top_m(const FeatureWeights& w, std::size_t m = 200);

}  // namespace survbench
