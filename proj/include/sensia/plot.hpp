#pragma once

// Minimal static SVG line charts for metrics curves.

#include <string>
#include <vector>

namespace sensia {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  // Fixed y range when lo < hi; otherwise fitted to the data.
  double y_lo = 0.0;
  double y_hi = 0.0;
  // Dashed vertical markers (e.g. phase boundaries).
  std::vector<double> markers;
};

std::string line_chart_svg(const std::vector<Series>& series, const ChartSpec& spec);

}  // namespace sensia
