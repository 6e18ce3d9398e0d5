#pragma once

#include <string>
#include <vector>

namespace metampc {

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct SvgBand {
  std::string color;
  std::vector<double> x;
  std::vector<double> y_lo;
  std::vector<double> y_hi;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgBand> bands;
  std::vector<SvgSeries> series;
  bool equal_axes = false;
};

// Fixed-size standalone SVG with axes, ticks, legend; byte-deterministic for
// identical chart data.
void write_svg_chart(const SvgChart& chart, const std::string& path);

}  // namespace metampc
