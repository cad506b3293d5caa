#include "spnet/attributes.hpp"

#include <vector>

namespace spnet {

int connected_components(const GrayMap& gt) {
  const int h = gt.height;
  const int w = gt.width;
  std::vector<unsigned char> seen(gt.size(), 0);
  std::vector<int> stack;
  int count = 0;
  for (int start = 0; start < h * w; ++start) {
    if (seen[start] || gt.values[start] < 0.5) continue;
    ++count;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w;
      const int x = p % w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (seen[q] || gt.values[q] < 0.5) continue;
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
  }
  return count;
}

ScaleBin scale_bin(double ratio) {
  if (ratio < kSmallScaleLimit) return ScaleBin::kSmall;
  if (ratio > kLargeScaleLimit) return ScaleBin::kLarge;
  return ScaleBin::kMedium;
}

ObjectScale object_scale(const GrayMap& gt) {
  std::size_t fg = 0;
  for (double v : gt.values) fg += v >= 0.5;
  ObjectScale s;
  s.ratio = gt.size() == 0 ? 0.0 : static_cast<double>(fg) / static_cast<double>(gt.size());
  s.bin = scale_bin(s.ratio);
  return s;
}

std::string_view to_string(ScaleBin bin) {
  switch (bin) {
    case ScaleBin::kSmall:
      return "small";
    case ScaleBin::kMedium:
      return "medium";
    case ScaleBin::kLarge:
      return "large";
  }
  return "small";
}

}  // namespace spnet
