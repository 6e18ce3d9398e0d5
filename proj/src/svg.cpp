#include "metampc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "metampc/errors.hpp"

namespace metampc {
namespace {

constexpr double kWidth = 840.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 52.0;

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return std::string(buf);
}

std::string px(double v) { return fmt(v, "%.2f"); }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  void pad() {
    if (!valid()) {
      lo = 0.0;
      hi = 1.0;
      return;
    }
    if (hi - lo < 1e-12) {
      const double c = std::max(1.0, std::abs(lo));
      lo -= 0.5 * c * 1e-3 + 0.5;
      hi += 0.5 * c * 1e-3 + 0.5;
      return;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  double raw = span / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step;
  if (norm <= 1.5) {
    step = 1.0;
  } else if (norm <= 3.5) {
    step = 2.0;
  } else if (norm <= 7.5) {
    step = 5.0;
  } else {
    step = 10.0;
  }
  step *= mag;
  std::vector<double> out;
  double t = std::ceil(lo / step) * step;
  for (int guard = 0; t <= hi + 1e-9 * span && guard < 32; ++guard) {
    if (std::abs(t) < 1e-12 * span) t = 0.0;
    out.push_back(t);
    t += step;
  }
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_svg_chart(const SvgChart& chart, const std::string& path) {
  Range rx;
  Range ry;
  for (const auto& b : chart.bands) {
    for (double v : b.x) rx.include(v);
    for (double v : b.y_lo) ry.include(v);
    for (double v : b.y_hi) ry.include(v);
  }
  for (const auto& s : chart.series) {
    for (double v : s.x) rx.include(v);
    for (double v : s.y) ry.include(v);
  }
  rx.pad();
  ry.pad();
  if (chart.equal_axes) {
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double sx = (rx.hi - rx.lo) / plot_w;
    const double sy = (ry.hi - ry.lo) / plot_h;
    const double s = std::max(sx, sy);
    const double cx = 0.5 * (rx.lo + rx.hi);
    const double cy = 0.5 * (ry.lo + ry.hi);
    rx.lo = cx - 0.5 * s * plot_w;
    rx.hi = cx + 0.5 * s * plot_w;
    ry.lo = cy - 0.5 * s * plot_h;
    ry.hi = cy + 0.5 * s * plot_h;
  }

  const auto map_x = [&](double v) {
    return kLeft + (v - rx.lo) / (rx.hi - rx.lo) * (kWidth - kLeft - kRight);
  };
  const auto map_y = [&](double v) {
    return kHeight - kBottom -
           (v - ry.lo) / (ry.hi - ry.lo) * (kHeight - kTop - kBottom);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << (int)kWidth
      << "\" height=\"" << (int)kHeight << "\" viewBox=\"0 0 " << (int)kWidth
      << " " << (int)kHeight << "\">\n";
  svg << "<rect width=\"" << (int)kWidth << "\" height=\"" << (int)kHeight
      << "\" fill=\"#ffffff\"/>\n";

  for (double t : nice_ticks(rx.lo, rx.hi, 6)) {
    const double gx = map_x(t);
    svg << "<line x1=\"" << px(gx) << "\" y1=\"" << px(kTop) << "\" x2=\""
        << px(gx) << "\" y2=\"" << px(kHeight - kBottom)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << px(gx) << "\" y=\"" << px(kHeight - kBottom + 18)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#444444\" "
           "text-anchor=\"middle\">"
        << fmt(t, "%.4g") << "</text>\n";
  }
  for (double t : nice_ticks(ry.lo, ry.hi, 6)) {
    const double gy = map_y(t);
    svg << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(gy) << "\" x2=\""
        << px(kWidth - kRight) << "\" y2=\"" << px(gy)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(gy + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#444444\" "
           "text-anchor=\"end\">"
        << fmt(t, "%.4g") << "</text>\n";
  }
  svg << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(kTop) << "\" width=\""
      << px(kWidth - kLeft - kRight) << "\" height=\""
      << px(kHeight - kTop - kBottom)
      << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  for (const auto& band : chart.bands) {
    if (band.x.size() < 2 || band.x.size() != band.y_lo.size() ||
        band.x.size() != band.y_hi.size()) {
      continue;
    }
    svg << "<polygon fill=\"" << band.color
        << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < band.x.size(); ++i) {
      svg << px(map_x(band.x[i])) << "," << px(map_y(band.y_hi[i])) << " ";
    }
    for (std::size_t i = band.x.size(); i-- > 0;) {
      svg << px(map_x(band.x[i])) << "," << px(map_y(band.y_lo[i]));
      if (i > 0) svg << " ";
    }
    svg << "\"/>\n";
  }

  for (const auto& s : chart.series) {
    if (s.x.empty() || s.x.size() != s.y.size()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.8\"";
    if (s.dashed) svg << " stroke-dasharray=\"6,4\"";
    svg << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg << px(map_x(s.x[i])) << "," << px(map_y(s.y[i]));
      if (i + 1 < s.x.size()) svg << " ";
    }
    svg << "\"/>\n";
  }

  double ly = kTop + 16.0;
  for (const auto& s : chart.series) {
    if (s.label.empty()) continue;
    const double lx = kWidth - kRight - 170.0;
    svg << "<line x1=\"" << px(lx) << "\" y1=\"" << px(ly - 4) << "\" x2=\""
        << px(lx + 26) << "\" y2=\"" << px(ly - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"";
    if (s.dashed) svg << " stroke-dasharray=\"6,4\"";
    svg << "/>\n";
    svg << "<text x=\"" << px(lx + 32) << "\" y=\"" << px(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"#222222\">"
        << escape_xml(s.label) << "</text>\n";
    ly += 16.0;
  }

  svg << "<text x=\"" << px(kWidth / 2) << "\" y=\"" << px(kTop - 12)
      << "\" font-family=\"sans-serif\" font-size=\"15\" fill=\"#111111\" "
         "text-anchor=\"middle\">"
      << escape_xml(chart.title) << "</text>\n";
  svg << "<text x=\"" << px(kWidth / 2) << "\" y=\"" << px(kHeight - 10)
      << "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\" "
         "text-anchor=\"middle\">"
      << escape_xml(chart.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << px(kHeight / 2)
      << "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\" "
         "text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << px(kHeight / 2) << ")\">" << escape_xml(chart.y_label)
      << "</text>\n";
  svg << "</svg>\n";

  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open svg output: " + path);
  out << svg.str();
}

}  // namespace metampc
