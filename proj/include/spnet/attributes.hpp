#pragma once

#include <string>
#include <string_view>

#include "spnet/gray_map.hpp"

namespace spnet {

/// Number of 8-connected foreground (>= 0.5) components.
int connected_components(const GrayMap& gt);

enum class ScaleBin { kSmall, kMedium, kLarge };

inline constexpr double kSmallScaleLimit = 0.1;
inline constexpr double kLargeScaleLimit = 0.4;

struct ObjectScale {
  double ratio = 0.0;
  ScaleBin bin = ScaleBin::kSmall;
};

/// Foreground share of the image; below 0.1 is small, above 0.4 large,
/// and [0.1, 0.4] medium.
ScaleBin scale_bin(double ratio);
ObjectScale object_scale(const GrayMap& gt);

std::string_view to_string(ScaleBin bin);

}  // namespace spnet
