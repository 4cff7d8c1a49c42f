#pragma once

#include "blendtrack/regressor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace blendtrack {

struct BenchReport {
  std::string platform;
  double mean_ms_per_pair = 0.0;
  double expected_fps = 0.0;  // 1000 / mean_ms_per_pair
  std::size_t pairs_measured = 0;
};

inline constexpr std::size_t kBenchWarmupPairs = 10;
inline constexpr std::size_t kDefaultBenchPairs = 400;

// Times full-face inference on one (left, right) pair per batch, after
// kBenchWarmupPairs untimed pairs. Inputs are seeded noise images.
BenchReport bench_forward(const nn::RegressorModel& model, std::size_t n_pairs = kDefaultBenchPairs,
                          std::uint64_t seed = 0);

std::string platform_description();

}  // namespace blendtrack
