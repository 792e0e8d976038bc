#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace seqrl {

/// One line of a metrics CSV. Fields an agent does not produce stay empty.
struct MetricsRow {
  std::int64_t step = 0;
  std::optional<std::int64_t> episode;
  std::optional<double> episode_return;
  std::optional<double> loss;
  std::optional<double> epsilon;
  std::optional<std::int64_t> kills;
  std::optional<std::int64_t> deaths;
  std::optional<double> kd_ratio;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader = "step,episode,return,loss,epsilon,kills,deaths,kd_ratio";

double kd_ratio(std::int64_t kills, std::int64_t deaths);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line);

/// Appends rows to a CSV file, flushing after each one. Steps must not
/// decrease.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);

  void append(const MetricsRow& row);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::optional<std::int64_t> last_step_;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

/// Numeric column of a metrics-style CSV by header name; blank cells are
/// skipped together with their row.
std::vector<std::pair<double, double>> read_series(const std::string& path, const std::string& column);

}  // namespace seqrl
