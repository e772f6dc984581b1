#pragma once

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace mtlab {

// Self-contained SVG scatter/line plots; no display server involved. CSVs are
// the authoritative artifact, these are conveniences for eyeballing results.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(std::string name, std::vector<std::pair<double, double>> points,
                  bool lines = true, bool markers = true) {
    series_.push_back({std::move(name), std::move(points), lines, markers});
  }

  std::string render(int width = 760, int height = 520) const {
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = x_min, y_max = -x_min;
    for (const Series& s : series_)
      for (auto [x, y] : s.points) {
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    if (!(x_min <= x_max)) {
      x_min = 0;
      x_max = 1;
      y_min = 0;
      y_max = 1;
    }
    if (x_min == x_max) {
      x_min -= 0.5;
      x_max += 0.5;
    }
    if (y_min == y_max) {
      y_min -= 0.5;
      y_max += 0.5;
    }
    const double ml = 70, mr = 160, mt = 40, mb = 55;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    auto sy = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::string out;
    out += fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
               "font-family=\"sans-serif\" font-size=\"12\">\n",
               width, height);
    out += fmt("<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", width, height);
    out += fmt("<text x=\"%g\" y=\"22\" font-size=\"15\">%s</text>\n", ml, title_.c_str());
    out += fmt("<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
               "stroke=\"#888\"/>\n",
               ml, mt, pw, ph);
    for (int i = 0; i <= 4; ++i) {
      const double fx = x_min + (x_max - x_min) * i / 4.0;
      const double fy = y_min + (y_max - y_min) * i / 4.0;
      out += fmt("<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.4g</text>\n", sx(fx),
                 mt + ph + 18, fx);
      out += fmt("<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.4g</text>\n", ml - 6,
                 sy(fy) + 4, fy);
      out += fmt("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#eee\"/>\n", sx(fx), mt,
                 sx(fx), mt + ph);
      out += fmt("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#eee\"/>\n", ml, sy(fy),
                 ml + pw, sy(fy));
    }
    out += fmt("<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>\n", ml + pw / 2,
               static_cast<double>(height - 12), x_label_.c_str());
    out += fmt("<text x=\"16\" y=\"%g\" transform=\"rotate(-90 16 %g)\" "
               "text-anchor=\"middle\">%s</text>\n",
               mt + ph / 2, mt + ph / 2, y_label_.c_str());

    for (std::size_t si = 0; si < series_.size(); ++si) {
      const Series& s = series_[si];
      const char* color = kColors[si % kColorCount];
      if (s.lines && s.points.size() > 1) {
        std::string path = "M";
        for (auto [x, y] : s.points) path += fmt(" %g %g", sx(x), sy(y));
        out += fmt("<path d=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                   path.c_str(), color);
      }
      if (s.markers)
        for (auto [x, y] : s.points)
          out += fmt("<circle cx=\"%g\" cy=\"%g\" r=\"3\" fill=\"%s\"/>\n", sx(x), sy(y), color);
      out += fmt("<circle cx=\"%g\" cy=\"%g\" r=\"4\" fill=\"%s\"/>\n", ml + pw + 14,
                 mt + 12 + 18.0 * static_cast<double>(si), color);
      out += fmt("<text x=\"%g\" y=\"%g\">%s</text>\n", ml + pw + 24,
                 mt + 16 + 18.0 * static_cast<double>(si), s.name.c_str());
    }
    out += "</svg>\n";
    return out;
  }

 private:
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    bool lines;
    bool markers;
  };

  static std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
  }

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  static constexpr std::size_t kColorCount = 8;

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
};

}  // namespace mtlab
