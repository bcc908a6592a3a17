#pragma once

#include <string>
#include <vector>

namespace synth::plot {

// One line over the chart's x categories. NaN values leave a gap. A band is
// drawn when low and high have the same length as y.
struct Series {
  std::string name;
  std::vector<double> y;
  std::vector<double> low;
  std::vector<double> high;
};

struct LineChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> x;  // category labels, left to right
  std::vector<Series> series;
};

// Fixed-size SVG with a zero-based y axis rounded up to 1, 2 or 5 times a
// power of ten. Output depends only on the chart, so equal charts give equal
// bytes.
std::string render_svg(const LineChart& chart);

// Upper end of the y axis for a data maximum.
double nice_ceiling(double v);

}  // namespace synth::plot
