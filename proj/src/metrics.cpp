#include "seqrl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "seqrl/error.hpp"

namespace seqrl {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
std::optional<T> parse_cell(const std::string& cell, const std::string& column) {
  if (cell.empty()) return std::nullopt;
  T value{};
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || end != cell.data() + cell.size()) {
    throw FormatError("metrics: bad value '" + cell + "' in column " + column, 0);
  }
  return value;
}

template <typename T>
void put(std::string& out, const std::optional<T>& value) {
  out += ',';
  if (!value) return;
  if constexpr (std::is_floating_point_v<T>) {
    out += format_double(*value);
  } else {
    out += std::to_string(*value);
  }
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

double kd_ratio(std::int64_t kills, std::int64_t deaths) {
  return static_cast<double>(kills) / static_cast<double>(std::max<std::int64_t>(1, deaths));
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("format_double: conversion failed");
  return std::string(buf, end);
}

std::string format_metrics_row(const MetricsRow& row) {
  std::string out = std::to_string(row.step);
  put(out, row.episode);
  put(out, row.episode_return);
  put(out, row.loss);
  put(out, row.epsilon);
  put(out, row.kills);
  put(out, row.deaths);
  put(out, row.kd_ratio);
  return out;
}

MetricsRow parse_metrics_row(const std::string& line) {
  const auto cells = split_csv(trim_cr(line));
  if (cells.size() != 8) throw FormatError("metrics: expected 8 columns, got " + std::to_string(cells.size()), 0);
  MetricsRow row;
  const auto step = parse_cell<std::int64_t>(cells[0], "step");
  if (!step) throw FormatError("metrics: step must not be blank", 0);
  row.step = *step;
  row.episode = parse_cell<std::int64_t>(cells[1], "episode");
  row.episode_return = parse_cell<double>(cells[2], "return");
  row.loss = parse_cell<double>(cells[3], "loss");
  row.epsilon = parse_cell<double>(cells[4], "epsilon");
  row.kills = parse_cell<std::int64_t>(cells[5], "kills");
  row.deaths = parse_cell<std::int64_t>(cells[6], "deaths");
  row.kd_ratio = parse_cell<double>(cells[7], "kd_ratio");
  return row;
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open metrics file '" + path + "' for writing");
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
  if (last_step_ && row.step < *last_step_) {
    throw StateError("metrics step went backwards: " + std::to_string(row.step) + " after " + std::to_string(*last_step_));
  }
  last_step_ = row.step;
  out_ << format_metrics_row(row) << '\n';
  out_.flush();
  if (!out_) throw Error("write to metrics file '" + path_ + "' failed");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != kMetricsHeader) {
    throw FormatError("metrics: missing or wrong header in '" + path + "'", 0);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (!trim_cr(line).empty()) rows.push_back(parse_metrics_row(line));
  }
  return rows;
}

std::vector<std::pair<double, double>> read_series(const std::string& path, const std::string& column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV file '" + path + "' is empty", 0);
  const auto header = split_csv(trim_cr(line));
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw ConfigError("column '" + column + "' not found in '" + path + "'", column, 1);
  const std::size_t index = static_cast<std::size_t>(it - header.begin());
  std::vector<std::pair<double, double>> series;
  while (std::getline(in, line)) {
    const auto cells = split_csv(trim_cr(line));
    if (cells.size() <= index || cells[0].empty() || cells[index].empty()) continue;
    const auto x = parse_cell<double>(cells[0], header[0]);
    const auto y = parse_cell<double>(cells[index], column);
    series.emplace_back(*x, *y);
  }
  return series;
}

}  // namespace seqrl
