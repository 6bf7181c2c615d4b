#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ppl::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 24;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

void header(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << escape(title)
      << "</text>\n";
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double pw = kWidth - kMarginLeft - kMarginRight;
  const double ph = kHeight - kMarginTop - kMarginBottom;
  auto px = [&](double x) {
    return kMarginLeft + (x - xmin) / (xmax - xmin) * pw;
  };
  auto py = [&](double y) {
    return kMarginTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph;
  };

  std::ostringstream out;
  header(out, title);
  // Axes and ticks.
  out << "<g stroke=\"#444\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + ph
      << "\" x2=\"" << kMarginLeft + pw << "\" y2=\"" << kMarginTop + ph
      << "\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
      << kMarginLeft << "\" y2=\"" << kMarginTop + ph << "\"/>\n";
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = xmin + (xmax - xmin) * i / 4.0;
    const double y = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << px(x) << "\" y=\"" << kMarginTop + ph + 16
        << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
    out << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
  }
  out << "<text x=\"" << kMarginLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"14\" y=\"" << kMarginTop + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << kMarginTop + ph / 2 << ")\">" << escape(y_label) << "</text>\n";
  out << "</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points)
      out << fmt(px(x)) << "," << fmt(py(y)) << " ";
    out << "\"/>\n";
    for (const auto& [x, y] : series[i].points)
      out << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kMarginLeft + pw - 4 << "\" y=\""
        << kMarginTop + 14 + 16 * static_cast<int>(i)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"12\" fill=\"" << color << "\">"
        << escape(series[i].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string histogram_overlay(const std::string& title,
                              const std::vector<Histogram>& histograms) {
  double ymax = 0.0;
  std::size_t bins = 0;
  for (const auto& h : histograms) {
    bins = std::max(bins, h.bins.size());
    for (double v : h.bins) ymax = std::max(ymax, v);
  }
  if (bins == 0 || ymax <= 0.0) ymax = 1.0;

  const double pw = kWidth - kMarginLeft - kMarginRight;
  const double ph = kHeight - kMarginTop - kMarginBottom;
  const double bw = pw / static_cast<double>(bins);

  std::ostringstream out;
  header(out, title);
  out << "<g stroke=\"#444\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + ph
      << "\" x2=\"" << kMarginLeft + pw << "\" y2=\"" << kMarginTop + ph
      << "\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
      << kMarginLeft << "\" y2=\"" << kMarginTop + ph << "\"/>\n";
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">\n";
  for (int i = 0; i <= 4; ++i) {
    out << "<text x=\"" << kMarginLeft + pw * i / 4.0 << "\" y=\""
        << kMarginTop + ph + 16 << "\" text-anchor=\"middle\">"
        << fmt(i / 4.0) << "</text>\n";
    out << "<text x=\"" << kMarginLeft - 6 << "\" y=\""
        << kMarginTop + ph * (1.0 - i / 4.0) + 4 << "\" text-anchor=\"end\">"
        << fmt(ymax * i / 4.0) << "</text>\n";
  }
  out << "<text x=\"" << kMarginLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">normalized value</text>\n";
  out << "</g>\n";

  for (std::size_t hi = 0; hi < histograms.size(); ++hi) {
    const char* color = kPalette[hi % kPaletteSize];
    const auto& h = histograms[hi];
    for (std::size_t b = 0; b < h.bins.size(); ++b) {
      const double v = std::max(0.0, h.bins[b]);
      const double bar_h = v / ymax * ph;
      out << "<rect x=\"" << fmt(kMarginLeft + bw * static_cast<double>(b))
          << "\" y=\"" << fmt(kMarginTop + ph - bar_h) << "\" width=\""
          << fmt(bw) << "\" height=\"" << fmt(bar_h) << "\" fill=\"" << color
          << "\" fill-opacity=\"0.45\"/>\n";
    }
    out << "<text x=\"" << kMarginLeft + pw - 4 << "\" y=\""
        << kMarginTop + 14 + 16 * static_cast<int>(hi)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"12\" fill=\"" << color << "\">" << escape(h.label)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string heatmap(const std::string& title, int rows, int cols,
                    const std::vector<double>& values) {
  const double pw = kWidth - kMarginLeft - kMarginRight;
  const double ph = kHeight - kMarginTop - kMarginBottom;
  const double cell = std::min(pw / cols, ph / rows);
  const double x0 = kMarginLeft, y0 = kMarginTop;

  std::ostringstream out;
  header(out, title);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v =
          std::clamp(values[static_cast<std::size_t>(r) * cols + c], 0.0, 1.0);
      const int g = static_cast<int>(std::lround(v * 255.0));
      out << "<rect x=\"" << fmt(x0 + c * cell) << "\" y=\""
          << fmt(y0 + r * cell) << "\" width=\"" << fmt(cell) << "\" height=\""
          << fmt(cell) << "\" fill=\"rgb(" << g << "," << g << "," << g
          << ")\" stroke=\"#555\" stroke-width=\"0.5\"/>\n";
    }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ppl::svg
