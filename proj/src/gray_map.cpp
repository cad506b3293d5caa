#include "spnet/gray_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spnet {

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

Tap tap(int o, int in_extent, int out_extent) {
  double src = (o + 0.5) * static_cast<double>(in_extent) / out_extent - 0.5;
  if (src < 0.0) src = 0.0;
  int i0 = std::min(static_cast<int>(std::floor(src)), in_extent - 1);
  return {i0, std::min(i0 + 1, in_extent - 1), src - i0};
}

}  // namespace

GrayMap resize_bilinear(const GrayMap& map, int height, int width) {
  if (map.height < 1 || map.width < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("resize_bilinear: empty map");
  }
  if (map.height == height && map.width == width) return map;
  GrayMap out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap a = tap(y, map.height, height);
    for (int x = 0; x < width; ++x) {
      const Tap b = tap(x, map.width, width);
      const double top = (1.0 - b.frac) * map.at(a.i0, b.i0) + b.frac * map.at(a.i0, b.i1);
      const double bottom = (1.0 - b.frac) * map.at(a.i1, b.i0) + b.frac * map.at(a.i1, b.i1);
      out.at(y, x) = (1.0 - a.frac) * top + a.frac * bottom;
    }
  }
  return out;
}

}  // namespace spnet
