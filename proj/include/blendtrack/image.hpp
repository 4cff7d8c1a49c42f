#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace blendtrack {

// 8-bit RGB raster, row-major, interleaved (HWC).
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

  bool empty() const { return height == 0 || width == 0; }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

RgbImage flip_horizontal(const RgbImage& image);

// Binary PPM (P6, maxval 255).
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

// Normalized image, values in [0, 1]. Channel-major (CHW): value (c, y, x)
// lives at index (c * height + y) * width + x.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  static constexpr std::size_t kChannels = 3;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w) : height(h), width(w), values(kChannels * h * w, 0.0f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
  bool operator==(const ImageTensor&) const = default;
};

ImageTensor flip_horizontal(const ImageTensor& image);

}  // namespace blendtrack
