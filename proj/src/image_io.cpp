#include "spnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spnet {

namespace {

class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }

 private:
  png_image image_;
};

std::string describe(const std::filesystem::path& path, const png_image& image) {
  return path.string() + ": " + image.message;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  PngImage png;
  png_image* image = png.get();
  if (!png_image_begin_read_from_file(image, path.string().c_str())) {
    throw ImageError("cannot read PNG " + describe(path, *image));
  }
  if (image->format & PNG_FORMAT_FLAG_LINEAR) {
    throw ImageError(path.string() + ": unsupported bit depth (16-bit PNG)");
  }
  const bool color = (image->format & PNG_FORMAT_FLAG_COLOR) != 0;
  image->format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(*image));
  const png_color black{0, 0, 0};
  if (!png_image_finish_read(image, &black, buffer.data(), 0, nullptr)) {
    throw ImageError("cannot decode PNG " + describe(path, *image));
  }
  Image out;
  out.height = static_cast<int>(image->height);
  out.width = static_cast<int>(image->width);
  out.channels.assign(channels, GrayMap(out.height, out.width));
  const std::size_t pixels = static_cast<std::size_t>(out.height) * out.width;
  for (std::size_t i = 0; i < pixels; ++i) {
    for (int c = 0; c < channels; ++c) {
      out.channels[c].values[i] = buffer[i * channels + c] / 255.0;
    }
  }
  return out;
}

GrayMap load_map(const std::filesystem::path& path, std::string* warning) {
  Image image = load_image(path);
  if (image.channels.size() == 1) return std::move(image.channels[0]);
  if (warning != nullptr) {
    *warning = path.string() + ": color PNG averaged to gray";
  }
  GrayMap gray(image.height, image.width);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    // Average the 8-bit codes so that gray-valued color files load exactly.
    const double sum = image.channels[0].values[i] * 255.0 +
                       image.channels[1].values[i] * 255.0 +
                       image.channels[2].values[i] * 255.0;
    gray.values[i] = std::round(sum) / 3.0 / 255.0;
  }
  return gray;
}

std::vector<unsigned char> encode_png(const Image& img) {
  const int channels = static_cast<int>(img.channels.size());
  if (img.height < 1 || img.width < 1 || (channels != 1 && channels != 3)) {
    throw ImageError("encode_png: malformed image");
  }
  const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
  for (const GrayMap& c : img.channels) {
    if (c.height != img.height || c.width != img.width || c.size() != pixels) {
      throw ImageError("encode_png: malformed channel");
    }
  }
  std::vector<png_byte> buffer(pixels * channels);
  for (std::size_t i = 0; i < pixels; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double v = std::clamp(img.channels[c].values[i], 0.0, 1.0);
      buffer[i * channels + c] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
    }
  }
  PngImage png;
  png_image* image = png.get();
  image->width = static_cast<png_uint_32>(img.width);
  image->height = static_cast<png_uint_32>(img.height);
  image->format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(image, nullptr, &size, 0, buffer.data(), 0, nullptr)) {
    throw ImageError(std::string("encode_png: ") + image->message);
  }
  std::vector<unsigned char> bytes(size);
  if (!png_image_write_to_memory(image, bytes.data(), &size, 0, buffer.data(), 0,
                                 nullptr)) {
    throw ImageError(std::string("encode_png: ") + image->message);
  }
  bytes.resize(size);
  return bytes;
}

std::vector<unsigned char> encode_png(const GrayMap& map) {
  return encode_png(Image{map.height, map.width, {map}});
}

void save_image(const Image& image, const std::filesystem::path& path) {
  write_bytes(encode_png(image), path);
}

void save_map(const GrayMap& map, const std::filesystem::path& path) {
  write_bytes(encode_png(map), path);
}

void write_bytes(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("failed writing " + path.string());
}

}  // namespace spnet
