#include "blendtrack/bench.hpp"

#include "blendtrack/error.hpp"
#include "blendtrack/rng.hpp"
#include "blendtrack/training.hpp"

#include <sys/utsname.h>

#include <chrono>
#include <cmath>

namespace blendtrack {

namespace {

RgbImage noise_image(std::size_t h, std::size_t w, Rng& rng) {
  RgbImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

}  // namespace

std::string platform_description() {
  std::string out;
  utsname info{};
  if (uname(&info) == 0) out = std::string(info.sysname) + " " + info.release + " " + info.machine;
  else out = "unknown OS";
#if defined(__clang__)
  out += ", clang " __clang_version__;
#elif defined(__GNUC__)
  out += ", gcc " __VERSION__;
#endif
  return out + ", single thread";
}

BenchReport bench_forward(const nn::RegressorModel& model, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) fail(ErrorCategory::InvalidArgument, "bench needs at least 1 pair");
  const nn::InputSpec spec = model.input_spec();
  Rng rng(seed);
  const std::size_t total = kBenchWarmupPairs + n_pairs;
  std::vector<RgbImage> left;
  std::vector<RgbImage> right;
  for (std::size_t i = 0; i < total; ++i) {
    left.push_back(noise_image(spec.height, spec.width, rng));
    right.push_back(noise_image(spec.height, spec.width, rng));
  }
  double checksum = 0.0;
  for (std::size_t i = 0; i < kBenchWarmupPairs; ++i) checksum += predict_full_face(model, left[i], right[i])[0];
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = kBenchWarmupPairs; i < total; ++i) checksum += predict_full_face(model, left[i], right[i])[0];
  const auto stop = std::chrono::steady_clock::now();
  if (!std::isfinite(checksum)) fail(ErrorCategory::Numeric, "bench: non-finite model output");

  BenchReport report;
  report.platform = platform_description();
  report.pairs_measured = n_pairs;
  report.mean_ms_per_pair =
      std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(n_pairs);
  report.expected_fps = 1000.0 / report.mean_ms_per_pair;
  return report;
}

}  // namespace blendtrack
