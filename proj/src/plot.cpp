#include "synth/plot.hpp"

#include <cmath>
#include <cstdio>

#include "synth/error.hpp"

namespace synth::plot {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 64, kRight = 150, kTop = 40, kBottom = 70;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
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

double nice_ceiling(double v) {
  if (!(v > 0) || !std::isfinite(v)) return 1.0;
  const double base = std::pow(10.0, std::floor(std::log10(v)));
  for (const double m : {1.0, 2.0, 5.0, 10.0}) {
    if (v <= m * base * (1 + 1e-12)) return m * base;
  }
  return 10 * base;
}

std::string render_svg(const LineChart& chart) {
  const std::size_t n = chart.x.size();
  double top = 0;
  for (const auto& s : chart.series) {
    if (s.y.size() != n) throw Error("series " + s.name + " does not match the x axis");
    const bool band = s.low.size() == n && s.high.size() == n;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isfinite(s.y[i])) top = std::max(top, s.y[i]);
      if (band && std::isfinite(s.high[i])) top = std::max(top, s.high[i]);
    }
  }
  const double y_max = nice_ceiling(top);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const auto px = [&](std::size_t i) { return kLeft + (n <= 1 ? plot_w / 2 : plot_w * i / double(n - 1)); };
  const auto py = [&](double v) { return kTop + plot_h * (1 - v / y_max); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + tick(kWidth) + "\" height=\"" +
                    tick(kHeight) + "\" viewBox=\"0 0 " + tick(kWidth) + ' ' + tick(kHeight) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(chart.title) + "</text>\n";

  // Axes, grid and tick labels.
  for (int k = 0; k <= 5; ++k) {
    const double v = y_max * k / 5, y = py(v);
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft + plot_w) + "\" y2=\"" + num(y) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick(v) + "</text>\n";
  }
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" + num(kLeft + plot_w) + "\" y2=\"" +
         num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  const std::size_t stride = n > 12 ? (n + 11) / 12 : 1;
  for (std::size_t i = 0; i < n; i += stride) {
    const double x = px(i), y = kTop + plot_h + 14;
    out += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"end\" transform=\"rotate(-45 " + num(x) +
           ' ' + num(y) + ")\">" + escape(chart.x[i]) + "</text>\n";
  }
  out += "<text x=\"16\" y=\"" + num(kTop + plot_h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + plot_h / 2) + ")\">" + escape(chart.y_label) + "</text>\n";

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    const std::string color = kPalette[s % std::size(kPalette)];
    if (series.low.size() == n && series.high.size() == n) {
      // One polygon per run of finite bounds.
      std::size_t i = 0;
      while (i < n) {
        while (i < n && !(std::isfinite(series.low[i]) && std::isfinite(series.high[i]))) ++i;
        std::size_t j = i;
        while (j < n && std::isfinite(series.low[j]) && std::isfinite(series.high[j])) ++j;
        if (j > i) {
          std::string pts;
          for (std::size_t k = i; k < j; ++k) pts += num(px(k)) + ',' + num(py(series.high[k])) + ' ';
          for (std::size_t k = j; k-- > i;) pts += num(px(k)) + ',' + num(py(series.low[k])) + ' ';
          pts.pop_back();
          out += "<polygon points=\"" + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        }
        i = j;
      }
    }
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(series.y[i])) {
        pen = false;
        continue;
      }
      path += (pen ? " L" : (path.empty() ? "M" : " M")) + num(px(i)) + ' ' + num(py(series.y[i]));
      pen = true;
    }
    if (!path.empty()) {
      out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(s);
    out += "<line x1=\"" + num(kWidth - kRight + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kWidth - kRight + 32) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(kWidth - kRight + 38) + "\" y=\"" + num(ly + 4) + "\">" + escape(series.name) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace synth::plot
