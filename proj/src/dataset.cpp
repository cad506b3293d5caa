#include "spnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "spnet/config.hpp"
#include "spnet/image_io.hpp"

namespace spnet {

namespace {

constexpr int kSupersample = 4;

// Fraction of a pixel covered by the shape, from a 4x4 subpixel grid.
template <typename Inside>
GrayMap coverage(int size, Inside inside) {
  GrayMap out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double py = y + (sy + 0.5) / kSupersample;
          const double px = x + (sx + 0.5) / kSupersample;
          hits += inside(py, px) ? 1 : 0;
        }
      }
      out.at(y, x) = static_cast<double>(hits) / (kSupersample * kSupersample);
    }
  }
  return out;
}

GrayMap binarize(GrayMap map) {
  for (double& v : map.values) v = v >= 0.5 ? 1.0 : 0.0;
  return map;
}

double sample_bilinear(const GrayMap& map, double y, double x) {
  y = std::clamp(y, 0.0, map.height - 1.0);
  x = std::clamp(x, 0.0, map.width - 1.0);
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, map.height - 1);
  const int x1 = std::min(x0 + 1, map.width - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  const double top = (1.0 - fx) * map.at(y0, x0) + fx * map.at(y0, x1);
  const double bottom = (1.0 - fx) * map.at(y1, x0) + fx * map.at(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

template <typename Fn>
Scene transform(const Scene& s, Fn fn) {
  Scene out;
  out.name = s.name;
  for (int c = 0; c < 3; ++c) out.rgb[c] = fn(s.rgb[c]);
  out.depth = fn(s.depth);
  out.gt = binarize(fn(s.gt));
  return out;
}

std::map<std::string, std::filesystem::path> png_stems(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("dataset: missing directory " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

GrayMap fit(const GrayMap& map, int size) { return resize_bilinear(map, size, size); }

}  // namespace

Scene synthetic_scene(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = size;
  const bool disc = unit(rng) < 0.5;
  const double cy = s * (0.3 + 0.4 * unit(rng));
  const double cx = s * (0.3 + 0.4 * unit(rng));
  const double ry = s * (0.12 + 0.16 * unit(rng));
  const double rx = disc ? ry : s * (0.12 + 0.16 * unit(rng));
  const GrayMap alpha = coverage(size, [&](double y, double x) {
    if (disc) return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= ry * ry;
    return std::fabs(y - cy) <= ry && std::fabs(x - cx) <= rx;
  });

  // Foreground and background colors at least 0.3 apart in one channel.
  std::array<double, 3> fg{}, bg{};
  do {
    for (int c = 0; c < 3; ++c) {
      fg[c] = unit(rng);
      bg[c] = unit(rng);
    }
  } while (std::max({std::fabs(fg[0] - bg[0]), std::fabs(fg[1] - bg[1]),
                     std::fabs(fg[2] - bg[2])}) < 0.3);

  // Background distance grows toward the top of the image (a floor plane);
  // the object stands at a nearer distance.
  const double near = 1.0 + 0.5 * unit(rng);
  const double far = 3.0 + 2.0 * unit(rng);
  const double object_distance = near + 0.3 * (far - near) * unit(rng);

  Scene scene;
  scene.depth = GrayMap(size, size);
  for (int c = 0; c < 3; ++c) scene.rgb[c] = GrayMap(size, size);
  for (int y = 0; y < size; ++y) {
    const double t = (y + 0.5) / s;
    const double bg_distance = far + (near - far) * t;
    for (int x = 0; x < size; ++x) {
      const double a = alpha.at(y, x);
      const double shade = 0.85 + 0.15 * (x + 0.5) / s;
      for (int c = 0; c < 3; ++c) {
        scene.rgb[c].at(y, x) = (1.0 - a) * bg[c] * shade + a * fg[c];
      }
      scene.depth.at(y, x) = (1.0 - a) / bg_distance + a / object_distance;
    }
  }
  scene.gt = binarize(alpha);
  return scene;
}

std::vector<Scene> synthetic_dataset(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ValidationError("synthetic dataset: count must be >= 1");
  if (size < 1) throw ValidationError("synthetic dataset: size must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    Scene s = synthetic_scene(rng, size);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%03d", i);
    s.name = name;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Scene> load_dataset(const std::filesystem::path& dir, int size) {
  const auto rgb = png_stems(dir / "rgb");
  const auto depth = png_stems(dir / "depth");
  const auto gt = png_stems(dir / "gt");
  std::vector<std::string> unpaired;
  for (const auto* group : {&rgb, &depth, &gt}) {
    for (const auto& [stem, path] : *group) {
      if (!rgb.count(stem) || !depth.count(stem) || !gt.count(stem)) {
        unpaired.push_back(path.string());
      }
    }
  }
  if (!unpaired.empty()) {
    std::string msg = "dataset: unpaired files:";
    for (const auto& p : unpaired) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (rgb.empty()) throw ValidationError("dataset: no PNG triples in " + dir.string());
  std::vector<Scene> out;
  for (const auto& [stem, path] : rgb) {
    Scene s;
    s.name = stem;
    const Image color = load_image(path);
    for (int c = 0; c < 3; ++c) {
      s.rgb[c] = fit(color.channels[color.channels.size() == 3 ? c : 0], size);
    }
    s.depth = fit(load_map(depth.at(stem)), size);
    s.gt = binarize(fit(load_map(gt.at(stem)), size));
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::vector<Scene>& scenes, const std::filesystem::path& dir) {
  for (const char* sub : {"rgb", "depth", "gt"}) {
    std::filesystem::create_directories(dir / sub);
  }
  for (const Scene& s : scenes) {
    const int h = s.gt.height;
    const int w = s.gt.width;
    save_image(Image{h, w, {s.rgb[0], s.rgb[1], s.rgb[2]}}, dir / "rgb" / (s.name + ".png"));
    save_map(s.depth, dir / "depth" / (s.name + ".png"));
    save_map(s.gt, dir / "gt" / (s.name + ".png"));
  }
}

GrayMap flip_horizontal(const GrayMap& map) {
  GrayMap out(map.height, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) out.at(y, x) = map.at(y, map.width - 1 - x);
  }
  return out;
}

GrayMap rotate(const GrayMap& map, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cy = (map.height - 1) / 2.0;
  const double cx = (map.width - 1) / 2.0;
  GrayMap out(map.height, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double dy = y - cy;
      const double dx = x - cx;
      out.at(y, x) = sample_bilinear(map, cy + c * dy - s * dx, cx + s * dy + c * dx);
    }
  }
  return out;
}

GrayMap clip_borders(const GrayMap& map, int top, int bottom, int left, int right) {
  const int h = map.height - top - bottom;
  const int w = map.width - left - right;
  if (top < 0 || bottom < 0 || left < 0 || right < 0 || h < 1 || w < 1) {
    throw ValidationError("clip_borders: crop leaves no pixels");
  }
  GrayMap crop(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) crop.at(y, x) = map.at(y + top, x + left);
  }
  return resize_bilinear(crop, map.height, map.width);
}

Scene augment(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene out = scene;
  if (cfg.hflip && unit(rng) < 0.5) out = transform(out, flip_horizontal);
  if (cfg.rotate) {
    const double angle = kMaxRotationDegrees * (2.0 * unit(rng) - 1.0);
    out = transform(out, [angle](const GrayMap& m) { return rotate(m, angle); });
  }
  if (cfg.border_clip) {
    const int h = out.gt.height;
    const int w = out.gt.width;
    const auto pick = [&](int extent) {
      return static_cast<int>(std::floor(kMaxBorderClip * extent * unit(rng)));
    };
    const int top = pick(h), bottom = pick(h), left = pick(w), right = pick(w);
    out = transform(out, [=](const GrayMap& m) {
      return clip_borders(m, top, bottom, left, right);
    });
  }
  return out;
}

Tensor map_to_tensor(const GrayMap& map) {
  return Tensor::from_data({1, 1, map.height, map.width}, map.values);
}

GrayMap tensor_to_map(const Tensor& t, int sample) {
  const Shape& s = t.shape();
  if (s.c != 1 || sample < 0 || sample >= s.n) {
    throw DimensionError("tensor_to_map: expected a single-channel sample of " + s.str());
  }
  const auto d = t.data();
  const auto begin = d.begin() + static_cast<std::ptrdiff_t>(sample * s.plane());
  return GrayMap(s.h, s.w, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(s.plane())));
}

Batch make_batch(std::span<const Scene> scenes) {
  if (scenes.empty()) throw ValidationError("make_batch: empty batch");
  const int h = scenes[0].gt.height;
  const int w = scenes[0].gt.width;
  const int n = static_cast<int>(scenes.size());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> rgb(n * 3 * plane), depth(n * plane), gt(n * plane);
  for (int i = 0; i < n; ++i) {
    const Scene& s = scenes[i];
    if (s.gt.height != h || s.gt.width != w) {
      throw DimensionError("make_batch: scenes differ in size");
    }
    for (int c = 0; c < 3; ++c) {
      std::copy(s.rgb[c].values.begin(), s.rgb[c].values.end(),
                rgb.begin() + static_cast<std::ptrdiff_t>((i * 3 + c) * plane));
    }
    std::copy(s.depth.values.begin(), s.depth.values.end(),
              depth.begin() + static_cast<std::ptrdiff_t>(i * plane));
    std::copy(s.gt.values.begin(), s.gt.values.end(),
              gt.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return {Tensor::from_data({n, 3, h, w}, std::move(rgb)),
          Tensor::from_data({n, 1, h, w}, std::move(depth)),
          Tensor::from_data({n, 1, h, w}, std::move(gt))};
}

}  // namespace spnet
