#include "survbench/concordance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace survbench {

namespace {

// Fenwick tree over risk ranks.
class RankCounter {
 public:
  explicit RankCounter(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t rank) {
    for (std::size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Number of inserted ranks strictly below `rank`.
  std::int64_t below(std::size_t rank) const {
    std::int64_t total = 0;
    for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) total += tree_[i];
    return total;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace

ConcordanceResult concordance_index(std::span<const double> risk, std::span<const double> time,
                                    std::span<const int> event) {
  const std::size_t n = risk.size();
  if (time.size() != n || event.size() != n) {
    throw Error("dimension_mismatch", "risk, time and event must have equal length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(risk[i]) || !std::isfinite(time[i])) {
      throw Error("non_finite", "risk scores and times must be finite");
    }
  }

  // Dense ranks of the risk scores, equal scores share a rank.
  std::vector<std::size_t> by_risk(n);
  std::iota(by_risk.begin(), by_risk.end(), 0);
  std::sort(by_risk.begin(), by_risk.end(), [&](auto a, auto b) { return risk[a] < risk[b]; });
  std::vector<std::size_t> rank(n);
  std::size_t n_ranks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && risk[by_risk[i]] != risk[by_risk[i - 1]]) ++n_ranks;
    rank[by_risk[i]] = n_ranks;
  }
  ++n_ranks;

  std::vector<std::size_t> by_time(n);
  std::iota(by_time.begin(), by_time.end(), 0);
  std::sort(by_time.begin(), by_time.end(), [&](auto a, auto b) { return time[a] > time[b]; });

  // Sweep from the latest time down. When a group of equal times is reached,
  // the counter holds exactly the rows with strictly later times.
  RankCounter counter(n_ranks);
  std::int64_t inserted = 0;
  ConcordanceResult out;
  std::size_t g = 0;
  while (g < n) {
    std::size_t end = g;
    while (end < n && time[by_time[end]] == time[by_time[g]]) ++end;
    for (std::size_t i = g; i < end; ++i) {
      const auto row = by_time[i];
      if (event[row] != 1) continue;
      const std::int64_t lower = counter.below(rank[row]);
      const std::int64_t lower_or_equal = counter.below(rank[row] + 1);
      out.n_concordant += lower;
      out.n_tied_risk += lower_or_equal - lower;
      out.n_discordant += inserted - lower_or_equal;
      out.n_comparable += inserted;
    }
    for (std::size_t i = g; i < end; ++i) counter.add(rank[by_time[i]]);
    inserted += static_cast<std::int64_t>(end - g);
    g = end;
  }
  if (out.n_comparable == 0) {
    throw Error("no_comparable_pairs", "no comparable pairs for concordance");
  }
  out.c_index = (static_cast<double>(out.n_concordant) + 0.5 * static_cast<double>(out.n_tied_risk)) /
                static_cast<double>(out.n_comparable);
  return out;
}

}  // namespace survbench
