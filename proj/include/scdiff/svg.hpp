#pragma once

#include <cstddef>
#include <string>

#include "scdiff/io.hpp"
#include "scdiff/tensor.hpp"

namespace scdiff {

struct ScatterOptions {
  double canvas = 480.0;        // plot area in px, square
  double margin = 24.0;
  double point_radius = 1.5;
  std::size_t max_points = 20000;  // stride-subsample larger sets
};

// 2-d point cloud as an SVG file. Axis lines at x=0 / y=0 when in range,
// bounds padded 5%; an empty set yields axes over [-1,1]^2. Output is a pure
// function of (points, manifest, options).
void plot_scatter(const Tensor& points, const std::string& path,
                  const RunManifest& manifest, const ScatterOptions& opt = {});

struct FieldOptions {
  double cell = 12.0;  // px per grid cell
};

// Square grid as grayscale cells, black at the minimum entry and white at the
// maximum, with the data range printed under the image.
void plot_field(const Tensor& grid, const std::string& path,
                const RunManifest& manifest, const FieldOptions& opt = {});

}  // namespace scdiff
