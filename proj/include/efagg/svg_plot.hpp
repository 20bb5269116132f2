#pragma once

#include <string>
#include <vector>

namespace efagg::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // sorted by x before drawing
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 480;
};

// Renders line series with axes, ticks and a legend into an SVG file.
void write_line_svg(const std::string& path, const PlotSpec& spec,
                    const std::vector<Series>& series);

}  // namespace efagg::plot
