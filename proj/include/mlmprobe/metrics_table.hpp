#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mlmprobe {

// Relation column values for aggregate rows.
inline constexpr const char* kMacroRelation = "_macro";  // unweighted mean over relations
inline constexpr const char* kPooledRelation = "_all";   // computed over pooled queries

// One line of metrics.csv. value is absent when the metric is undefined for
// the row; it is written as NA.
struct MetricRow {
  std::string experiment;
  std::string variant;
  std::string relation_id;
  std::string metric;
  std::optional<double> value;
  std::size_t count = 0;
};

class MetricsTable {
 public:
  void add(std::string experiment, std::string variant, std::string relation_id,
           std::string metric, std::optional<double> value, std::size_t count);

  // Appends the `_macro` row for (experiment, variant, metric): mean over the
  // per-relation rows with a value; count is the number of such relations.
  // Returns the mean, absent when no relation has a value.
  std::optional<double> add_macro(const std::string& experiment, const std::string& variant,
                                  const std::string& metric);

  const std::vector<MetricRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  // Rows sorted by (experiment, variant, relation, metric); values fixed to 6
  // decimals.
  void write_csv(std::ostream& out) const;

 private:
  std::vector<MetricRow> rows_;
};

// metrics.csv as text cells, exactly as written.
struct CsvRecord {
  std::string experiment;
  std::string variant;
  std::string relation_id;
  std::string metric;
  std::string value;
  std::string count;
};

std::vector<CsvRecord> read_metrics_csv(std::istream& in);
std::vector<CsvRecord> load_metrics_csv(const std::string& path);

// Markdown tables built only from metrics.csv cells.
std::string render_report(const std::vector<CsvRecord>& records);

}  // namespace mlmprobe
