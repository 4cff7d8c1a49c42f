#pragma once

#include "blendtrack/image.hpp"

#include <cstdint>

namespace blendtrack {

struct GainRange {
  double lo = 0.7;
  double hi = 1.3;
};

struct AugmentConfig {
  bool enabled = true;
  GainRange gain_range{};
};

// Per-channel white-balance gains drawn uniformly from `range`, applied and
// clamped to [0, 1]. Deterministic per seed.
ImageTensor white_balance_jitter(const ImageTensor& image, std::uint64_t seed, GainRange range);

// Bilinear resize (half-pixel centers, edge clamped) to out_h x out_w and
// scaling of 8-bit values to [0, 1].
ImageTensor resize_normalize(const RgbImage& image, std::size_t out_h, std::size_t out_w);

}  // namespace blendtrack
