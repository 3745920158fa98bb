#include "survbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace survbench {

std::size_t Column::missing_count() const {
  std::size_t count = 0;
  for (std::size_t r = 0; r < size(); ++r) count += missing(r) ? 1 : 0;
  return count;
}

RawTable::RawTable(std::vector<Column> columns, std::string time_col, std::string event_col)
    : columns_(std::move(columns)),
      time_col_(std::move(time_col)),
      event_col_(std::move(event_col)) {
  std::set<std::string> seen;
  for (const auto& c : columns_) {
    if (!seen.insert(c.name).second) {
      throw Error("duplicate_column", "duplicate column name: " + c.name);
    }
  }
  n_rows_ = columns_.empty() ? 0 : columns_.front().size();
  for (const auto& c : columns_) {
    if (c.size() != n_rows_) {
      throw Error("ragged_table", "column " + c.name + " has " + std::to_string(c.size()) +
                                      " cells, expected " + std::to_string(n_rows_));
    }
  }
  for (const auto* name : {&time_col_, &event_col_}) {
    auto idx = find(*name);
    if (!idx) throw Error("missing_column", "outcome column not found: " + *name);
    if (columns_[*idx].kind != ColumnKind::kNumeric) {
      throw Error("invalid_outcome", "outcome column is not numeric: " + *name);
    }
  }
}

std::optional<std::size_t> RawTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

const Column& RawTable::column(const std::string& name) const {
  auto idx = find(name);
  if (!idx) throw Error("missing_column", "no such column: " + name);
  return columns_[*idx];
}

std::vector<std::string> RawTable::feature_names() const {
  std::vector<std::string> names;
  for (const auto& c : columns_) {
    if (!is_outcome(c.name)) names.push_back(c.name);
  }
  return names;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::vector<std::vector<std::string>> split_records(std::string_view text, char delim) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      in_quotes = true;
      any = true;
    } else if (ch == delim) {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      record.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(ch);
    }
  }
  if (in_quotes) throw Error("malformed_csv", "unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace

RawTable parse_csv(std::string_view text, const std::string& time_col,
                   const std::string& event_col, const CsvOptions& options) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  auto records = split_records(text, options.delimiter);
  if (records.empty()) throw Error("malformed_csv", "CSV has no header row");
  const auto& header = records.front();
  const std::size_t n_cols = header.size();
  const std::size_t n_rows = records.size() - 1;

  std::set<std::string> seen;
  for (const auto& name : header) {
    if (!seen.insert(name).second) {
      throw Error("duplicate_column", "duplicate column name: " + name);
    }
  }
  for (const auto* name : {&time_col, &event_col}) {
    if (!seen.count(*name)) throw Error("missing_column", "outcome column not found: " + *name);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != n_cols) {
      throw Error("malformed_csv", "line " + std::to_string(r + 1) + " has " +
                                       std::to_string(records[r].size()) + " fields, expected " +
                                       std::to_string(n_cols));
    }
  }

  auto is_missing = [&](const std::string& cell) {
    return cell.empty() || cell == options.na_string;
  };

  std::vector<Column> columns;
  columns.reserve(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    Column col;
    col.name = header[c];
    bool numeric = true;
    std::vector<std::optional<double>> values(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto& cell = records[r + 1][c];
      if (is_missing(cell)) continue;
      auto v = parse_double(cell);
      if (!v) {
        numeric = false;
        break;
      }
      values[r] = *v;
    }
    const bool outcome = col.name == time_col || col.name == event_col;
    if (!numeric && outcome) {
      if (col.name == event_col) throw Error("invalid_event", "invalid event value in column " + col.name);
      throw Error("invalid_time", "invalid time value in column " + col.name);
    }
    if (numeric) {
      col.kind = ColumnKind::kNumeric;
      col.numeric = std::move(values);
    } else {
      col.kind = ColumnKind::kCategorical;
      col.text.resize(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cell = records[r + 1][c];
        if (!is_missing(cell)) col.text[r] = cell;
      }
    }
    if (col.name == event_col) {
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& v = col.numeric[r];
        if (v && *v != 0.0 && *v != 1.0) {
          throw Error("invalid_event", "invalid event value '" + records[r + 1][c] + "' on line " +
                                           std::to_string(r + 2));
        }
      }
    }
    if (col.name == time_col) {
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& v = col.numeric[r];
        if (v && (!std::isfinite(*v) || *v < 0.0)) {
          throw Error("invalid_time", "invalid time value '" + records[r + 1][c] + "' on line " +
                                          std::to_string(r + 2));
        }
      }
    }
    columns.push_back(std::move(col));
  }
  return RawTable(std::move(columns), time_col, event_col);
}

RawTable load_csv(const std::string& path, const std::string& time_col,
                  const std::string& event_col, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot open input file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), time_col, event_col, options);
}

// ---------------------------------------------------------------------------
// Row / column filters

namespace {

Column take_rows(const Column& col, const std::vector<std::size_t>& rows) {
  Column out;
  out.name = col.name;
  out.kind = col.kind;
  if (col.kind == ColumnKind::kNumeric) {
    for (auto r : rows) out.numeric.push_back(col.numeric[r]);
  } else {
    for (auto r : rows) out.text.push_back(col.text[r]);
  }
  return out;
}

}  // namespace

RawTable drop_missing_outcomes(const RawTable& table, Diagnostics* diag) {
  const auto& time = table.column(table.time_col());
  const auto& event = table.column(table.event_col());
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (!time.missing(r) && !event.missing(r)) keep.push_back(r);
  }
  if (keep.size() == table.n_rows()) return table;
  warn(diag, "dropped " + std::to_string(table.n_rows() - keep.size()) +
                 " rows with missing time or event");
  std::vector<Column> cols;
  for (const auto& c : table.columns()) cols.push_back(take_rows(c, keep));
  return RawTable(std::move(cols), table.time_col(), table.event_col());
}

RawTable drop_high_missingness(const RawTable& table, double threshold,
                               std::vector<std::string>* dropped) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error("invalid_argument", "missingness threshold must lie in (0, 1]");
  }
  const double n = static_cast<double>(table.n_rows());
  std::vector<Column> kept;
  for (const auto& c : table.columns()) {
    if (!table.is_outcome(c.name) && n > 0 &&
        static_cast<double>(c.missing_count()) / n >= threshold) {
      if (dropped) dropped->push_back(c.name);
      continue;
    }
    kept.push_back(c);
  }
  return RawTable(std::move(kept), table.time_col(), table.event_col());
}

RawTable dummy_encode(const RawTable& table, Diagnostics* diag) {
  std::vector<Column> out;
  for (const auto& c : table.columns()) {
    if (c.kind == ColumnKind::kNumeric) {
      out.push_back(c);
      continue;
    }
    std::set<std::string> levels;
    for (const auto& v : c.text) {
      if (v) levels.insert(*v);
    }
    if (levels.size() < 2) {
      warn(diag, "categorical column '" + c.name + "' has " + std::to_string(levels.size()) +
                     " observed level(s); removed");
      continue;
    }
    auto it = levels.begin();
    for (++it; it != levels.end(); ++it) {
      Column ind;
      ind.name = c.name + "=" + *it;
      ind.kind = ColumnKind::kNumeric;
      ind.numeric.reserve(c.text.size());
      for (const auto& v : c.text) {
        if (v) {
          ind.numeric.emplace_back(*v == *it ? 1.0 : 0.0);
        } else {
          ind.numeric.emplace_back(std::nullopt);
        }
      }
      out.push_back(std::move(ind));
    }
  }
  return RawTable(std::move(out), table.time_col(), table.event_col());
}

// ---------------------------------------------------------------------------
// SurvivalDataset

std::size_t SurvivalDataset::n_events() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), 1));
}

void SurvivalDataset::validate() const {
  const auto n = features.rows();
  if (time.size() != n || static_cast<Eigen::Index>(event.size()) != n) {
    throw Error("invalid_dataset", "time/event length does not match feature rows");
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw Error("invalid_dataset", "feature_names length does not match feature columns");
  }
  if (!features.allFinite()) throw Error("invalid_dataset", "features contain non-finite values");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(time[i]) || time[i] < 0.0) {
      throw Error("invalid_dataset", "time must be finite and non-negative");
    }
    if (event[i] != 0 && event[i] != 1) throw Error("invalid_dataset", "event must be 0 or 1");
  }
}

SurvivalDataset SurvivalDataset::subset_rows(std::span<const std::size_t> rows) const {
  SurvivalDataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.time.resize(static_cast<Eigen::Index>(rows.size()));
  out.event.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
    out.time[static_cast<Eigen::Index>(i)] = time[r];
    out.event[i] = event[rows[i]];
  }
  return out;
}

SurvivalDataset SurvivalDataset::subset_features(std::span<const std::size_t> cols) const {
  SurvivalDataset out;
  out.time = time;
  out.event = event;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.features.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(cols[j]));
    out.feature_names.push_back(feature_names.at(cols[j]));
  }
  return out;
}

SurvivalDataset to_survival_dataset(const RawTable& table) {
  const auto names = table.feature_names();
  const auto n = static_cast<Eigen::Index>(table.n_rows());
  SurvivalDataset ds;
  ds.feature_names = names;
  ds.features.resize(n, static_cast<Eigen::Index>(names.size()));
  ds.time.resize(n);
  ds.event.resize(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto& col = table.column(names[j]);
    if (col.kind != ColumnKind::kNumeric) {
      throw Error("invalid_dataset", "column '" + col.name + "' is categorical; dummy-encode first");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = col.numeric[static_cast<std::size_t>(i)];
      if (!v) throw Error("invalid_dataset", "column '" + col.name + "' has missing cells");
      ds.features(i, static_cast<Eigen::Index>(j)) = *v;
    }
  }
  const auto& time = table.column(table.time_col());
  const auto& event = table.column(table.event_col());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    if (!time.numeric[r] || !event.numeric[r]) {
      throw Error("invalid_dataset", "missing outcome on row " + std::to_string(r));
    }
    ds.time[i] = *time.numeric[r];
    ds.event[r] = static_cast<int>(*event.numeric[r]);
  }
  ds.validate();
  return ds;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string to_csv(const SurvivalDataset& ds, const std::string& time_col,
                   const std::string& event_col) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& name : ds.feature_names) out << csv_escape(name) << ',';
  out << csv_escape(time_col) << ',' << csv_escape(event_col) << '\n';
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.n_features(); ++j) out << ds.features(i, j) << ',';
    out << ds.time[i] << ',' << ds.event[static_cast<std::size_t>(i)] << '\n';
  }
  return out.str();
}

void write_csv(const SurvivalDataset& ds, const std::string& path, const std::string& time_col,
               const std::string& event_col) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write file: " + path);
  out << to_csv(ds, time_col, event_col);
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldAssignment::test_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
    if (fold_of_row[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
    if (fold_of_row[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldAssignment stratified_kfold(std::span<const int> event, int k, std::uint64_t seed) {
  if (k < 2) throw Error("invalid_argument", "fold count must be at least 2");
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < event.size(); ++i) {
    (event[i] == 1 ? positives : negatives).push_back(i);
  }
  const auto uk = static_cast<std::size_t>(k);
  if (positives.size() < uk || negatives.size() < uk) {
    throw Error("stratum_too_small",
                "each event stratum needs at least " + std::to_string(k) + " rows (events: " +
                    std::to_string(positives.size()) + ", censored: " +
                    std::to_string(negatives.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);

  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  out.fold_of_row.assign(event.size(), -1);
  // Deal positives round-robin, then continue the rotation with negatives so
  // fold sizes also stay within one row of each other.
  std::size_t slot = 0;
  for (auto r : positives) out.fold_of_row[r] = static_cast<int>(slot++ % uk);
  for (auto r : negatives) out.fold_of_row[r] = static_cast<int>(slot++ % uk);
  return out;
}

}  // namespace survbench
