#pragma once

// Minimal SVG 1.1 figures: line overlays, scatter clouds and densities.

#include "rcn/common.hpp"
#include "rcn/metrics.hpp"

#include <string>
#include <vector>

namespace rcn::plot {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
  std::string color = "#1f5fbf";
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 640;
  double height = 400;
};

/// Polylines sharing one pair of axes.
std::string lines(const Figure& fig, const std::vector<Series>& series);
/// Point clouds; points are drawn as small circles.
std::string scatter(const Figure& fig, const std::vector<Series>& series, double radius = 1.0);
/// Step outlines of density estimates over their bin centers.
std::string densities(const Figure& fig, const std::vector<DensityEstimate>& d, const std::vector<std::string>& labels);

/// Evenly strided subsample of at most `max_points` indices of [0, n).
std::vector<std::size_t> thin(std::size_t n, std::size_t max_points);

}  // namespace rcn::plot
