#include "abcm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "abcm/errors.hpp"

namespace abcm {
namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string csv_table(const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  if (columns.empty()) throw ContractError("csv_table: no columns");
  std::string out;
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ',';
    out += columns[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size()) {
      throw ContractError("csv_table: row has " + std::to_string(row.size()) +
                          " cells, header has " + std::to_string(columns.size()));
    }
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_number(row[i]);
    }
    out += '\n';
  }
  return out;
}

double parse_csv_number(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc()) {
    throw ParseError("not a number: '" + cell + "'");
  }
  return value;
}

std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<PlotSeries>& series, int width,
                          int height) {
  const double ml = 64, mr = 18, mt = 36, mb = 48;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw ContractError("line_plot_svg: series '" + s.label + "' has " +
                          std::to_string(s.x.size()) + " x values and " +
                          std::to_string(s.y.size()) + " y values");
    }
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo <= 0) {
      const double pad = std::max(1.0, std::fabs(hi)) * 0.5;
      lo -= pad;
      hi += pad;
    } else {
      const double pad = (hi - lo) * 0.05;
      lo -= pad;
      hi += pad;
    }
  };
  widen(xmin, xmax);
  widen(ymin, ymax);

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + svg_coord(width / 2.0) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         escape_xml(title) + "</text>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    const double fy = ymin + (ymax - ymin) * i / ticks;
    const double gx = px(fx);
    const double gy = py(fy);
    svg += "<line x1=\"" + svg_coord(gx) + "\" y1=\"" + svg_coord(mt) + "\" x2=\"" +
           svg_coord(gx) + "\" y2=\"" + svg_coord(mt + ph) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + svg_coord(ml) + "\" y1=\"" + svg_coord(gy) + "\" x2=\"" +
           svg_coord(ml + pw) + "\" y2=\"" + svg_coord(gy) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    char label[32];
    std::snprintf(label, sizeof(label), "%.4g", fx);
    svg += "<text x=\"" + svg_coord(gx) + "\" y=\"" + svg_coord(mt + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           label + "</text>\n";
    std::snprintf(label, sizeof(label), "%.4g", fy);
    svg += "<text x=\"" + svg_coord(ml - 8) + "\" y=\"" + svg_coord(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + label +
           "</text>\n";
  }

  svg += "<rect x=\"" + svg_coord(ml) + "\" y=\"" + svg_coord(mt) + "\" width=\"" +
         svg_coord(pw) + "\" height=\"" + svg_coord(ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg += "<text x=\"" + svg_coord(ml + pw / 2) + "\" y=\"" + svg_coord(height - 10.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         escape_xml(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + svg_coord(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 " +
         svg_coord(mt + ph / 2) + ")\">" + escape_xml(y_label) + "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      if (!points.empty()) points += ' ';
      points += svg_coord(px(series[s].x[i])) + "," + svg_coord(py(series[s].y[i]));
      svg += "<circle cx=\"" + svg_coord(px(series[s].x[i])) + "\" cy=\"" +
             svg_coord(py(series[s].y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    }
    if (!points.empty()) {
      svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
    }
    if (!series[s].label.empty()) {
      const double ly = mt + 14 + 16 * static_cast<double>(s);
      svg += "<line x1=\"" + svg_coord(ml + pw - 120) + "\" y1=\"" + svg_coord(ly - 4) +
             "\" x2=\"" + svg_coord(ml + pw - 100) + "\" y2=\"" + svg_coord(ly - 4) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + svg_coord(ml + pw - 94) + "\" y=\"" + svg_coord(ly) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + escape_xml(series[s].label) +
             "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars,
                          int width, int height) {
  const double ml = 64, mr = 18, mt = 36, mb = 86;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;

  double ymax = 0;
  for (const auto& [label, value] : bars) {
    if (!(value >= 0) || !std::isfinite(value)) {
      throw ContractError("bar_chart_svg: bar '" + label +
                          "' has a negative or non-finite value");
    }
    ymax = std::max(ymax, value);
  }
  if (ymax <= 0) ymax = 1;

  auto py = [&](double y) { return mt + ph - y / ymax * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + svg_coord(width / 2.0) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         escape_xml(title) + "</text>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fy = ymax * i / ticks;
    const double gy = py(fy);
    svg += "<line x1=\"" + svg_coord(ml) + "\" y1=\"" + svg_coord(gy) + "\" x2=\"" +
           svg_coord(ml + pw) + "\" y2=\"" + svg_coord(gy) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    char label[32];
    std::snprintf(label, sizeof(label), "%.4g", fy);
    svg += "<text x=\"" + svg_coord(ml - 8) + "\" y=\"" + svg_coord(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + label +
           "</text>\n";
  }

  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  const double bw = slot * 0.7;
  for (size_t i = 0; i < bars.size(); ++i) {
    const double x0 = ml + slot * (static_cast<double>(i) + 0.15);
    const double top = py(bars[i].second);
    const char* color = kPalette[0];
    svg += "<rect x=\"" + svg_coord(x0) + "\" y=\"" + svg_coord(top) + "\" width=\"" +
           svg_coord(bw) + "\" height=\"" + svg_coord(mt + ph - top) + "\" fill=\"" +
           color + "\"/>\n";
    const double cx = x0 + bw / 2;
    const double ty = mt + ph + 12;
    svg += "<text x=\"" + svg_coord(cx) + "\" y=\"" + svg_coord(ty) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" "
           "transform=\"rotate(-45 " +
           svg_coord(cx) + " " + svg_coord(ty) + ")\">" + escape_xml(bars[i].first) +
           "</text>\n";
  }

  svg += "<rect x=\"" + svg_coord(ml) + "\" y=\"" + svg_coord(mt) + "\" width=\"" +
         svg_coord(pw) + "\" height=\"" + svg_coord(ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg += "<text x=\"16\" y=\"" + svg_coord(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 " +
         svg_coord(mt + ph / 2) + ")\">" + escape_xml(y_label) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace abcm
