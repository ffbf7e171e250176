#include "sensia/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "sensia/errors.hpp"

namespace sensia {

namespace {

constexpr double kWidth = 480, kHeight = 320;
constexpr double kLeft = 60, kRight = 20, kTop = 36, kBottom = 48;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartSpec& spec) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw InvalidArgument("series x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      if (std::isfinite(s.y[i])) {
        y_lo = std::min(y_lo, s.y[i]);
        y_hi = std::max(y_hi, s.y[i]);
      }
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0;
  if (!std::isfinite(y_lo)) y_lo = 0.0, y_hi = 1.0;
  if (spec.y_lo < spec.y_hi) y_lo = spec.y_lo, y_hi = spec.y_hi;
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(spec.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y_lo + (y_hi - y_lo) * i / 4.0, xv = x_lo + (x_hi - x_lo) * i / 4.0;
    out << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << num(py(yv)) << "\" y2=\""
        << num(py(yv)) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
        << "</text>\n";
    out << "<text x=\"" << num(px(xv)) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << tick(xv) << "</text>\n";
  }
  for (double m : spec.markers) {
    if (m < x_lo || m > x_hi) continue;
    out << "<line x1=\"" << num(px(m)) << "\" x2=\"" << num(px(m)) << "\" y1=\"" << kTop << "\" y2=\""
        << kTop + ph << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << "</text>\n";
  out << "<text transform=\"translate(14 " << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      out << num(px(series[s].x[i])) << ',' << num(py(std::clamp(series[s].y[i], y_lo, y_hi))) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 14 + 14.0 * static_cast<double>(s) << "\" fill=\""
        << color << "\">" << escape(series[s].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace sensia
