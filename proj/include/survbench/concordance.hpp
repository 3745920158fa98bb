#pragma once

#include <cstdint>
#include <span>

#include "survbench/common.hpp"

namespace survbench {

struct ConcordanceResult {
  double c_index = 0.0;
  std::int64_t n_concordant = 0;
  std::int64_t n_discordant = 0;
  std::int64_t n_tied_risk = 0;
  std::int64_t n_comparable = 0;
};

/// Harrell's C. A pair (i, j) is comparable when time_i < time_j and
/// event_i = 1; it is concordant when risk_i > risk_j. Tied risks count one
/// half. Runs in O(n log n).
///
/// Throws Error("no_comparable_pairs") when nothing can be compared.
ConcordanceResult concordance_index(std::span<const double> risk, std::span<const double> time,
                                    std::span<const int> event);

inline ConcordanceResult concordance_index(const VectorXd& risk, const VectorXd& time,
                                           std::span<const int> event) {
  return concordance_index(std::span<const double>(risk.data(), static_cast<std::size_t>(risk.size())),
                           std::span<const double>(time.data(), static_cast<std::size_t>(time.size())),
                           event);
}

}  // namespace survbench
