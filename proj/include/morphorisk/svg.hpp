#pragma once

// Minimal diff-stable SVG figures: every coordinate is printed with two
// decimals and elements appear in input order.

#include <optional>
#include <string>
#include <vector>

#include "morphorisk/stats_models.hpp"

namespace morphorisk::svg {

struct StepSeries {
  std::string label;
  stats::KMCurve curve;
};

/// Kaplan-Meier step curves on [0, x_max] x [0, 1].
std::string km_plot(const std::string& title, const std::vector<StepSeries>& series, double x_max);

/// Cells coloured by value on [lo, hi]; missing cells are grey.
std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels,
                    const std::vector<std::vector<std::optional<double>>>& values, double lo, double hi);

struct Bar {
  std::string label;
  std::optional<double> point;
  std::optional<double> lower;
  std::optional<double> upper;
};

/// Vertical bars with interval whiskers; y axis spans [y_lo, y_hi].
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars,
                      double y_lo, double y_hi);

struct LineSeries {
  std::string label;
  std::vector<std::optional<double>> y;
};

/// Polylines over shared x values; gaps where y is missing.
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x, const std::vector<LineSeries>& series);

std::string escape(const std::string& text);

}  // namespace morphorisk::svg
