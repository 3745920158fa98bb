#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "survbench/data.hpp"

namespace survbench {

// Distance between two rows is the Euclidean distance over the feature
// columns observed in both, after standardizing each column to zero mean and
// unit variance (computed over observed cells). A missing cell takes the
// unweighted mean of the raw values held by its k nearest donors, where a
// donor is any row observing that column and sharing at least one observed
// column with the recipient. Distance ties go to the lower row index.
RawTable knn_impute(const RawTable& table, int k, Diagnostics* diag, ImputeSummary* summary) {
  if (k < 1) throw Error("invalid_argument", "knn k must be at least 1");

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.n_columns(); ++c) {
    const auto& col = table.columns()[c];
    if (table.is_outcome(col.name)) continue;
    if (col.kind != ColumnKind::kNumeric) {
      throw Error("invalid_argument",
                  "knn_impute requires numeric columns; '" + col.name + "' is categorical");
    }
    feature_cols.push_back(c);
  }

  const std::size_t n = table.n_rows();
  const std::size_t p = feature_cols.size();
  std::vector<Column> columns = table.columns();
  ImputeSummary local;
  local.per_column.assign(table.n_columns(), 0);

  // Standardized copy with NaN marking missing.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> z(n * p, nan);
  for (std::size_t j = 0; j < p; ++j) {
    const auto& col = columns[feature_cols[j]];
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (col.numeric[r]) {
        sum += *col.numeric[r];
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (col.numeric[r]) ss += (*col.numeric[r] - mean) * (*col.numeric[r] - mean);
    }
    double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
    if (!(sd > 0.0)) sd = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (col.numeric[r]) z[r * p + j] = (*col.numeric[r] - mean) / sd;
    }
  }

  bool any_missing = false;
  for (std::size_t r = 0; r < n && !any_missing; ++r) {
    for (std::size_t j = 0; j < p; ++j) {
      if (std::isnan(z[r * p + j])) {
        any_missing = true;
        break;
      }
    }
  }
  if (!any_missing) {
    if (summary) *summary = std::move(local);
    return table;
  }

  std::vector<double> dist(n);
  std::vector<bool> shares(n);
  std::vector<std::size_t> donors;
  bool short_donor_warned = false;
  for (std::size_t r = 0; r < n; ++r) {
    const double* zr = &z[r * p];
    bool has_missing = false;
    bool has_observed = false;
    for (std::size_t j = 0; j < p; ++j) {
      (std::isnan(zr[j]) ? has_missing : has_observed) = true;
    }
    if (!has_missing) continue;
    if (!has_observed) {
      throw Error("row_unobserved", "row " + std::to_string(r) + " has no observed features");
    }
    for (std::size_t o = 0; o < n; ++o) {
      dist[o] = 0.0;
      shares[o] = false;
      if (o == r) continue;
      const double* zo = &z[o * p];
      for (std::size_t j = 0; j < p; ++j) {
        if (!std::isnan(zr[j]) && !std::isnan(zo[j])) {
          const double d = zr[j] - zo[j];
          dist[o] += d * d;
          shares[o] = true;
        }
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (!std::isnan(zr[j])) continue;
      auto& col = columns[feature_cols[j]];
      const auto& source = table.columns()[feature_cols[j]];
      donors.clear();
      for (std::size_t o = 0; o < n; ++o) {
        if (o != r && shares[o] && source.numeric[o]) donors.push_back(o);
      }
      if (donors.empty()) {
        throw Error("no_donors", "no donor rows to impute column '" + col.name + "' on row " +
                                     std::to_string(r));
      }
      const std::size_t take = std::min(donors.size(), static_cast<std::size_t>(k));
      if (take < static_cast<std::size_t>(k) && !short_donor_warned) {
        warn(diag, "fewer than k=" + std::to_string(k) + " donors for column '" + col.name +
                       "'; using all " + std::to_string(take));
        short_donor_warned = true;
      }
      std::partial_sort(donors.begin(), donors.begin() + static_cast<std::ptrdiff_t>(take),
                        donors.end(), [&](std::size_t a, std::size_t b) {
                          return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                        });
      double sum = 0.0;
      for (std::size_t i = 0; i < take; ++i) sum += *source.numeric[donors[i]];
      // Donor values come from the original table; imputed cells never act as donors.
      col.numeric[r] = sum / static_cast<double>(take);
      ++local.cells_imputed;
      ++local.per_column[feature_cols[j]];
    }
  }
  if (summary) *summary = std::move(local);
  return RawTable(std::move(columns), table.time_col(), table.event_col());
}

}  // namespace survbench
