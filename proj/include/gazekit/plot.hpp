#pragma once

// Small raster charts written as PNG, each with a CSV sidecar carrying the
// exact plotted values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/png_io.hpp"

namespace gazekit::plot {

namespace fs = std::filesystem;

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrid{225, 225, 225};
inline constexpr Rgb kBlue{52, 101, 164};
inline constexpr Rgb kOrange{230, 126, 34};

class Canvas {
 public:
  Canvas(int w, int h) : img_{h, w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)} {}

  int width() const { return img_.width; }
  int height() const { return img_.height; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto* p = &img_.data[(static_cast<std::size_t>(y) * img_.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
    const int r = thickness / 2;
    for (int i = 0; i <= steps; ++i) {
      const int x = x0 + (x1 - x0) * i / steps;
      const int y = y0 + (y1 - y0) * i / steps;
      fill_rect(x - r, y - r, x + r, y + r, c);
    }
  }

  void save(const fs::path& path) const { png::write(path, img_); }

 private:
  RawImage img_;
};

struct Frame {
  int left = 50, right = 20, top = 20, bottom = 40;
};

inline void write_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& labels,
                      const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << header << '\n';
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out << labels[i] << ',' << buf << '\n';
  }
}

struct CsvSeries {
  std::vector<std::string> labels;
  std::vector<double> values;
};

inline CsvSeries read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  CsvSeries s;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw DataError("malformed CSV line: " + line);
    s.labels.push_back(line.substr(0, comma));
    s.values.push_back(std::stod(line.substr(comma + 1)));
  }
  return s;
}

namespace detail {
inline void axes(Canvas& c, const Frame& f, int gridlines) {
  const int x0 = f.left, y0 = c.height() - f.bottom, y1 = f.top, x1 = c.width() - f.right;
  for (int g = 1; g <= gridlines; ++g) {
    const int y = y0 - (y0 - y1) * g / gridlines;
    c.line(x0, y, x1, y, kGrid);
  }
  c.line(x0, y0, x1, y0, kBlack, 2);
  c.line(x0, y0, x0, y1, kBlack, 2);
}
}  // namespace detail

/// Vertical bars scaled to the maximum value. Writes `<stem>.png` and `<stem>.csv`.
inline void bar_chart(const fs::path& stem, const std::vector<std::string>& labels, const std::vector<double>& values,
                      const std::string& value_name) {
  if (labels.size() != values.size()) throw InvalidArgument("labels/values size mismatch");
  const Frame f;
  Canvas c(std::max(320, 60 + 40 * static_cast<int>(values.size())), 240);
  detail::axes(c, f, 4);
  const double vmax = values.empty() ? 1.0 : std::max(1e-12, *std::max_element(values.begin(), values.end()));
  const int plot_w = c.width() - f.left - f.right, plot_h = c.height() - f.top - f.bottom;
  const int n = static_cast<int>(values.size());
  for (int i = 0; i < n; ++i) {
    const int slot = plot_w / std::max(n, 1);
    const int xa = f.left + i * slot + slot / 5, xb = f.left + (i + 1) * slot - slot / 5;
    const int h = static_cast<int>(std::lround(plot_h * std::max(0.0, values[i]) / vmax));
    c.fill_rect(xa, c.height() - f.bottom - 1, xb, c.height() - f.bottom - h, kBlue);
  }
  c.save(fs::path(stem.string() + ".png"));
  write_csv(fs::path(stem.string() + ".csv"), "label," + value_name, labels, values);
}

/// Polyline with point markers over evenly spaced x positions.
inline void line_chart(const fs::path& stem, const std::vector<std::string>& labels, const std::vector<double>& values,
                       const std::string& value_name) {
  if (labels.size() != values.size()) throw InvalidArgument("labels/values size mismatch");
  const Frame f;
  Canvas c(360, 240);
  detail::axes(c, f, 4);
  const int n = static_cast<int>(values.size());
  if (n > 0) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = std::min(0.0, *mn), hi = std::max(*mx, lo + 1e-12);
    const int plot_w = c.width() - f.left - f.right, plot_h = c.height() - f.top - f.bottom;
    auto px = [&](int i) { return f.left + (n == 1 ? plot_w / 2 : plot_w * i / (n - 1)); };
    auto py = [&](double v) { return c.height() - f.bottom - static_cast<int>(std::lround(plot_h * (v - lo) / (hi - lo))); };
    for (int i = 0; i + 1 < n; ++i) c.line(px(i), py(values[i]), px(i + 1), py(values[i + 1]), kOrange, 2);
    for (int i = 0; i < n; ++i) c.fill_rect(px(i) - 3, py(values[i]) - 3, px(i) + 3, py(values[i]) + 3, kBlack);
  }
  c.save(fs::path(stem.string() + ".png"));
  write_csv(fs::path(stem.string() + ".csv"), "label," + value_name, labels, values);
}

}  // namespace gazekit::plot
