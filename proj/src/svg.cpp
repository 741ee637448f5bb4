#include "scdiff/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace scdiff {
namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string svg_open(double width, double height, const RunManifest& manifest) {
  std::string line = manifest.comment_block("");
  if (!line.empty() && line.back() == '\n') line.pop_back();
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) +
                    "\" height=\"" + px(height) + "\" viewBox=\"0 0 " + px(width) + " " +
                    px(height) + "\">\n";
  out += "<!-- " + line + " -->\n";
  out += "<rect width=\"" + px(width) + "\" height=\"" + px(height) +
         "\" fill=\"white\"/>\n";
  return out;
}

}  // namespace

void plot_scatter(const Tensor& points, const std::string& path,
                  const RunManifest& manifest, const ScatterOptions& opt) {
  if (points.numel() != 0 && (points.rank() != 2 || points.shape[1] != 2))
    throw std::runtime_error("plot_scatter: points must have shape (n, 2)");
  std::size_t n = points.numel() == 0 ? 0 : points.shape[0];

  double xlo = -1, xhi = 1, ylo = -1, yhi = 1;
  if (n > 0) {
    xlo = xhi = points.at2(0, 0);
    ylo = yhi = points.at2(0, 1);
    for (std::size_t i = 1; i < n; i++) {
      xlo = std::min(xlo, points.at2(i, 0));
      xhi = std::max(xhi, points.at2(i, 0));
      ylo = std::min(ylo, points.at2(i, 1));
      yhi = std::max(yhi, points.at2(i, 1));
    }
    double xpad = 0.05 * (xhi - xlo), ypad = 0.05 * (yhi - ylo);
    if (xpad <= 0) xpad = 1;
    if (ypad <= 0) ypad = 1;
    xlo -= xpad, xhi += xpad, ylo -= ypad, yhi += ypad;
  }

  double total = opt.canvas + 2 * opt.margin;
  auto to_px_x = [&](double x) {
    return opt.margin + (x - xlo) / (xhi - xlo) * opt.canvas;
  };
  auto to_px_y = [&](double y) {
    return opt.margin + (yhi - y) / (yhi - ylo) * opt.canvas;
  };

  std::string out = svg_open(total, total, manifest);
  out += "<rect x=\"" + px(opt.margin) + "\" y=\"" + px(opt.margin) + "\" width=\"" +
         px(opt.canvas) + "\" height=\"" + px(opt.canvas) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  if (xlo < 0 && xhi > 0)
    out += "<line x1=\"" + px(to_px_x(0)) + "\" y1=\"" + px(opt.margin) + "\" x2=\"" +
           px(to_px_x(0)) + "\" y2=\"" + px(opt.margin + opt.canvas) +
           "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  if (ylo < 0 && yhi > 0)
    out += "<line x1=\"" + px(opt.margin) + "\" y1=\"" + px(to_px_y(0)) + "\" x2=\"" +
           px(opt.margin + opt.canvas) + "\" y2=\"" + px(to_px_y(0)) +
           "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";

  std::size_t stride = 1;
  if (opt.max_points > 0 && n > opt.max_points)
    stride = (n + opt.max_points - 1) / opt.max_points;
  for (std::size_t i = 0; i < n; i += stride)
    out += "<circle cx=\"" + px(to_px_x(points.at2(i, 0))) + "\" cy=\"" +
           px(to_px_y(points.at2(i, 1))) + "\" r=\"" + px(opt.point_radius) +
           "\" fill=\"black\" fill-opacity=\"0.5\"/>\n";
  out += "</svg>\n";
  write_text_file(path, out);
}

void plot_field(const Tensor& grid, const std::string& path,
                const RunManifest& manifest, const FieldOptions& opt) {
  if (grid.rank() != 2 || grid.shape[0] != grid.shape[1] || grid.numel() == 0)
    throw std::runtime_error("plot_field: grid must have shape (n, n)");
  std::size_t n = grid.shape[0];
  double lo = grid.data[0], hi = grid.data[0];
  for (double v : grid.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  double side = opt.cell * static_cast<double>(n);
  double margin = 12.0, caption = 24.0;
  std::string out = svg_open(side + 2 * margin, side + 2 * margin + caption, manifest);
  for (std::size_t i = 0; i < n; i++) {
    for (std::size_t j = 0; j < n; j++) {
      double v = grid.at2(i, j);
      int gray = hi > lo ? static_cast<int>(std::lround((v - lo) / (hi - lo) * 255.0)) : 128;
      gray = std::clamp(gray, 0, 255);
      std::string g = std::to_string(gray);
      // row i is the x coordinate, column j the y coordinate; x grows right, y up
      out += "<rect x=\"" + px(margin + opt.cell * static_cast<double>(i)) + "\" y=\"" +
             px(margin + side - opt.cell * static_cast<double>(j + 1)) + "\" width=\"" +
             px(opt.cell) + "\" height=\"" + px(opt.cell) + "\" fill=\"rgb(" + g + "," +
             g + "," + g + ")\"/>\n";
    }
  }
  out += "<rect x=\"" + px(margin) + "\" y=\"" + px(margin) + "\" width=\"" + px(side) +
         "\" height=\"" + px(side) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out += "<text x=\"" + px(margin) + "\" y=\"" + px(margin + side + 16.0) +
         "\" font-family=\"monospace\" font-size=\"11\">min=" + format_double(lo) +
         " max=" + format_double(hi) + "</text>\n";
  out += "</svg>\n";
  write_text_file(path, out);
}

}  // namespace scdiff
