#include "blendtrack/augment.hpp"

#include "blendtrack/error.hpp"
#include "blendtrack/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace blendtrack {

ImageTensor white_balance_jitter(const ImageTensor& image, std::uint64_t seed, GainRange range) {
  if (!(range.lo > 0.0) || !(range.lo <= range.hi) || !std::isfinite(range.hi))
    fail(ErrorCategory::InvalidArgument, "white balance gain range must satisfy 0 < lo <= hi");
  Rng rng(seed);
  std::array<double, ImageTensor::kChannels> gains{};
  for (auto& g : gains) g = rng.uniform(range.lo, range.hi);

  ImageTensor out = image;
  const std::size_t plane = image.height * image.width;
  for (std::size_t c = 0; c < ImageTensor::kChannels; ++c) {
    const auto gain = static_cast<float>(gains[c]);
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.values[c * plane + i];
      v = std::clamp(v * gain, 0.0f, 1.0f);
    }
  }
  return out;
}

ImageTensor resize_normalize(const RgbImage& image, std::size_t out_h, std::size_t out_w) {
  if (image.empty()) fail(ErrorCategory::InvalidArgument, "resize_normalize: zero-sized input image");
  if (out_h == 0 || out_w == 0) fail(ErrorCategory::InvalidArgument, "resize_normalize: zero target size");

  ImageTensor out(out_h, out_w);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  const auto clamp_index = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
  };

  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(image.height - 1));
    const std::size_t y0 = clamp_index(std::floor(fy), image.height);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(image.width - 1));
      const std::size_t x0 = clamp_index(std::floor(fx), image.width);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ImageTensor::kChannels; ++c) {
        const double top = (1.0 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c);
        const double bottom = (1.0 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c);
        const double v = ((1.0 - ty) * top + ty * bottom) / 255.0;
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace blendtrack
