#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survbench/common.hpp"

namespace survbench {

enum class ColumnKind { kNumeric, kCategorical };

/// One named column of a raw table. Exactly one of `numeric` / `text` is
/// populated, according to `kind`; std::nullopt marks a missing cell.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<std::optional<double>> numeric;
  std::vector<std::optional<std::string>> text;

  std::size_t size() const {
    return kind == ColumnKind::kNumeric ? numeric.size() : text.size();
  }
  bool missing(std::size_t row) const {
    return kind == ColumnKind::kNumeric ? !numeric[row].has_value()
                                        : !text[row].has_value();
  }
  std::size_t missing_count() const;
};

/// Tabular data before modelling. The outcome columns are tagged by name and
/// are always numeric.
class RawTable {
 public:
  RawTable() = default;
  RawTable(std::vector<Column> columns, std::string time_col, std::string event_col);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_columns() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const std::string& time_col() const { return time_col_; }
  const std::string& event_col() const { return event_col_; }

  bool is_outcome(const std::string& name) const {
    return name == time_col_ || name == event_col_;
  }
  const Column& column(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;

  /// Feature columns only, in table order.
  std::vector<std::string> feature_names() const;

 private:
  std::vector<Column> columns_;
  std::string time_col_;
  std::string event_col_;
  std::size_t n_rows_ = 0;
};

struct CsvOptions {
  std::string na_string = "NA";
  char delimiter = ',';
};

RawTable load_csv(const std::string& path, const std::string& time_col,
                  const std::string& event_col, const CsvOptions& options = {});

/// Parses CSV text already in memory; `load_csv` reads the file and defers here.
RawTable parse_csv(std::string_view text, const std::string& time_col,
                   const std::string& event_col, const CsvOptions& options = {});

/// Removes rows whose time or event cell is missing. The count goes to diag.
RawTable drop_missing_outcomes(const RawTable& table, Diagnostics* diag = nullptr);

/// Drops feature columns whose missing fraction is >= threshold. Outcome
/// columns are never dropped. Names of dropped columns are appended to
/// `dropped` when provided.
RawTable drop_high_missingness(const RawTable& table, double threshold = 0.5,
                               std::vector<std::string>* dropped = nullptr);

/// Reference (L-1) dummy coding of categorical columns. The sorted-first level
/// is the reference; indicator columns are named "<column>=<level>".
RawTable dummy_encode(const RawTable& table, Diagnostics* diag = nullptr);

struct ImputeSummary {
  std::size_t cells_imputed = 0;
  std::vector<std::size_t> per_column;  // aligned with table columns
};

/// KNN imputation of numeric feature columns. See knn_impute.cpp for the
/// distance definition.
RawTable knn_impute(const RawTable& table, int k = 5, Diagnostics* diag = nullptr,
                    ImputeSummary* summary = nullptr);

/// Dense modelling input: features plus (time, event) per row.
struct SurvivalDataset {
  MatrixXd features;
  std::vector<std::string> feature_names;
  VectorXd time;
  std::vector<int> event;

  Eigen::Index n_rows() const { return features.rows(); }
  Eigen::Index n_features() const { return features.cols(); }
  std::size_t n_events() const;

  /// Throws Error("invalid_dataset") when an invariant does not hold.
  void validate() const;

  SurvivalDataset subset_rows(std::span<const std::size_t> rows) const;
  SurvivalDataset subset_features(std::span<const std::size_t> cols) const;
};

/// Converts a fully numeric, fully observed table into a dataset.
SurvivalDataset to_survival_dataset(const RawTable& table);

/// Writes features followed by the time and event columns.
void write_csv(const SurvivalDataset& ds, const std::string& path,
               const std::string& time_col = "time", const std::string& event_col = "event");
std::string to_csv(const SurvivalDataset& ds, const std::string& time_col = "time",
                   const std::string& event_col = "event");

struct FoldAssignment {
  std::vector<int> fold_of_row;
  int k = 0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_rows(int fold) const;
  std::vector<std::size_t> train_rows(int fold) const;
};

/// Stratified on the event indicator; deterministic given seed.
FoldAssignment stratified_kfold(std::span<const int> event, int k, std::uint64_t seed);
inline FoldAssignment stratified_kfold(const SurvivalDataset& ds, int k, std::uint64_t seed) {
  return stratified_kfold(std::span<const int>(ds.event), k, seed);
}

}  // namespace survbench
