#ifndef ABCM_REPORT_HPP
#define ABCM_REPORT_HPP

#include <string>
#include <utility>
#include <vector>

namespace abcm {

// CSV with a header row and numeric cells printed as shortest round-trip
// decimals, so identical data serializes to identical bytes.
std::string csv_table(const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows);

double parse_csv_number(const std::string& cell);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line chart: axes, ticks, one polyline with point markers
// per series, and a legend when labels are present.
std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<PlotSeries>& series, int width = 640,
                          int height = 420);

// Standalone SVG bar chart: one labeled vertical bar per entry, y axis from
// zero. Bar values must be non-negative.
std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars,
                          int width = 640, int height = 420);

}  // namespace abcm

#endif
