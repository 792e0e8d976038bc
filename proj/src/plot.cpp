#include "seqrl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "seqrl/error.hpp"
#include "seqrl/metrics.hpp"

namespace seqrl {

namespace {

constexpr double kWidth = 640.0, kHeight = 400.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 20.0, kBottom = 50.0;

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ConfigError("moving-average window must be >= 1", "plot.window");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = window == 1 ? values[i] : sum / static_cast<double>(std::min(window, i + 1));
  }
  return out;
}

PlotRange padded_range(const std::vector<double>& values) {
  if (values.empty()) throw StateError("plot: no data points");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  const double pad = span > 0.0 ? 0.05 * span : std::max(1.0, 0.05 * std::abs(*lo));
  return {*lo - pad, *hi + pad};
}

std::string render_svg(const std::vector<std::pair<double, double>>& points, const std::string& x_label,
                       const std::string& y_label, std::size_t window) {
  if (points.empty()) throw StateError("plot: no data points");
  std::vector<double> xs, ys;
  for (const auto& [x, y] : points) {
    xs.push_back(x);
    ys.push_back(y);
  }
  ys = moving_average(ys, window);
  const PlotRange xr = padded_range(xs);
  const PlotRange yr = padded_range(ys);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  const std::string x0 = num(kLeft), x1 = num(kLeft + pw), y0 = num(kTop), y1 = num(kTop + ph);
  svg += "<line x1=\"" + x0 + "\" y1=\"" + y1 + "\" x2=\"" + x1 + "\" y2=\"" + y1 + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + x0 + "\" y1=\"" + y0 + "\" x2=\"" + x0 + "\" y2=\"" + y1 + "\" stroke=\"black\"/>\n";
  auto text = [&](double x, double y, const std::string& anchor, const std::string& body, const std::string& extra) {
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor +
           "\" font-family=\"sans-serif\" font-size=\"12\"" + extra + ">" + escape_xml(body) + "</text>\n";
  };
  text(kLeft, kTop + ph + 18, "start", format_double(xr.lo), "");
  text(kLeft + pw, kTop + ph + 18, "end", format_double(xr.hi), "");
  text(kLeft - 6, kTop + ph, "end", num(yr.lo), "");
  text(kLeft - 6, kTop + 12, "end", num(yr.hi), "");
  text(kLeft + pw / 2, kHeight - 10, "middle", x_label, "");
  const double ly = kTop + ph / 2;
  text(16, ly, "middle", y_label, " transform=\"rotate(-90 16 " + num(ly) + ")\"");
  svg += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) svg += ' ';
    svg += num(px(xs[i])) + "," + num(py(ys[i]));
  }
  svg += "\"/>\n</svg>\n";
  return svg;
}

void plot_metrics(const std::string& csv_path, const std::string& column, const std::string& output,
                  std::size_t window) {
  const auto series = read_series(csv_path, column);
  if (series.empty()) throw StateError("plot: column '" + column + "' of '" + csv_path + "' has no values");
  const std::string svg = render_svg(series, "step", column, window);
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + output + "' for writing");
  out << svg;
  if (!out) throw Error("write to '" + output + "' failed");
}

}  // namespace seqrl
