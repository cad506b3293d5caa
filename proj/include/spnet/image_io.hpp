#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "spnet/gray_map.hpp"

namespace spnet {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An 8-bit image as per-channel planes in [0, 1]; 1 or 3 channels.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<GrayMap> channels;
};

/// Reads an 8-bit PNG (gray, gray+alpha, RGB, RGBA or palette). Alpha is
/// dropped. Throws ImageError for unreadable files and 16-bit data.
Image load_image(const std::filesystem::path& path);

/// Reads a PNG as one gray map (value / 255). Color files are averaged over
/// their three channels and `warning`, when given, receives a note.
GrayMap load_map(const std::filesystem::path& path, std::string* warning = nullptr);

/// Writes an 8-bit gray PNG with round(value * 255) (half up), values
/// clamped to [0, 1].
void save_map(const GrayMap& map, const std::filesystem::path& path);

/// Writes an 8-bit gray or RGB PNG with the same rounding as save_map.
void save_image(const Image& image, const std::filesystem::path& path);

std::vector<unsigned char> encode_png(const GrayMap& map);
std::vector<unsigned char> encode_png(const Image& image);

void write_bytes(const std::vector<unsigned char>& bytes, const std::filesystem::path& path);

}  // namespace spnet
