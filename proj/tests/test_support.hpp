#pragma once

#include "blendtrack/blendshape.hpp"
#include "blendtrack/rng.hpp"

#include <filesystem>
#include <string>

namespace blendtrack::test {

inline BlendShapeVector random_weights(Rng& rng) {
  BlendShapeVector w;
  for (std::size_t i = 0; i < kBlendShapeCount; ++i) w[i] = rng.uniform();
  return w;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("blendtrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace blendtrack::test
