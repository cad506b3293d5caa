#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spnet/config.hpp"
#include "spnet/gray_map.hpp"
#include "spnet/tensor.hpp"

namespace spnet {

/// One training triple as maps in [0, 1]; gt is binary.
struct Scene {
  std::string name;
  std::array<GrayMap, 3> rgb;
  GrayMap depth;
  GrayMap gt;
};

/// Anti-aliased disc or rectangle on a colored background. Depth is an
/// inverse-distance ramp with the object nearer than the background behind it.
Scene synthetic_scene(std::mt19937_64& rng, int size);

/// `count` scenes named synth_000, synth_001, ... from a generator seeded by
/// `seed`.
std::vector<Scene> synthetic_dataset(int count, int size, std::uint64_t seed);

/// Reads rgb/, depth/ and gt/ subdirectories paired by file stem and resizes
/// every map to size x size. Throws ValidationError when a stem is missing
/// from any of the three directories or nothing is found.
std::vector<Scene> load_dataset(const std::filesystem::path& dir, int size);

/// Writes a dataset in the layout read by load_dataset.
void save_dataset(const std::vector<Scene>& scenes, const std::filesystem::path& dir);

struct AugmentConfig {
  bool hflip = false;
  bool rotate = false;
  bool border_clip = false;
};

inline constexpr double kMaxRotationDegrees = 15.0;
inline constexpr double kMaxBorderClip = 0.1;

/// Random horizontal flip (p = 0.5), rotation by an angle in +-15 degrees
/// and border clipping of 0-10% per side followed by a resize back. The
/// ground truth is resampled like the inputs and re-binarized at 0.5.
Scene augment(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng);

GrayMap flip_horizontal(const GrayMap& map);
/// Rotation about the center with bilinear sampling and edge clamping.
GrayMap rotate(const GrayMap& map, double degrees);
/// Crops the given number of pixels from each side and resizes back.
GrayMap clip_borders(const GrayMap& map, int top, int bottom, int left, int right);

struct Batch {
  Tensor rgb;    // (N, 3, S, S)
  Tensor depth;  // (N, 1, S, S)
  Tensor gt;     // (N, 1, S, S)
};

Batch make_batch(std::span<const Scene> scenes);

/// Single-channel (1, 1, H, W) tensor from a map, and back.
Tensor map_to_tensor(const GrayMap& map);
GrayMap tensor_to_map(const Tensor& t, int sample = 0);

}  // namespace spnet
