#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace seqrl {

/// Trailing mean over the last min(window, i + 1) values. window >= 1.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

struct PlotRange {
  double lo = 0.0, hi = 1.0;
};

/// Axis range covering `values` plus 5% padding each side; a constant series
/// is padded by max(1, 5% of |value|).
PlotRange padded_range(const std::vector<double>& values);

/// Standalone SVG line chart of one (x, y) series, smoothed by `window`.
std::string render_svg(const std::vector<std::pair<double, double>>& points, const std::string& x_label,
                       const std::string& y_label, std::size_t window = 1);

/// Reads `column` of a metrics CSV and writes the chart to `output`.
void plot_metrics(const std::string& csv_path, const std::string& column, const std::string& output,
                  std::size_t window = 1);

}  // namespace seqrl
