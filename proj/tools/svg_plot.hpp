#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ppl::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG line chart; one polyline per series plus a legend.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series);

struct Histogram {
  std::string label;
  std::vector<double> bins;  // masses over [0,1]
};

// Overlaid bar chart of histograms that share the [0,1] bin range.
std::string histogram_overlay(const std::string& title,
                              const std::vector<Histogram>& histograms);

// Grayscale cell map; values in [0,1], row-major.
std::string heatmap(const std::string& title, int rows, int cols,
                    const std::vector<double>& values);

}  // namespace ppl::svg
