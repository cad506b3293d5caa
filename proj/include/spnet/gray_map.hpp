#pragma once

#include <cstddef>
#include <vector>

namespace spnet {

/// Single-channel image with values in [0, 1], row-major.
struct GrayMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  GrayMap() = default;
  GrayMap(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  GrayMap(int h, int w, std::vector<double> v)
      : height(h), width(w), values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  bool same_extent(const GrayMap& o) const {
    return height == o.height && width == o.width;
  }
};

/// Bilinear resampling with half-pixel centers.
GrayMap resize_bilinear(const GrayMap& map, int height, int width);

}  // namespace spnet
