#include "blendtrack/augment.hpp"
#include "blendtrack/error.hpp"
#include "blendtrack/image.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>

using namespace blendtrack;

namespace {

ImageTensor reference_tensor() {
  ImageTensor img(4, 4);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>((i * 7 % 48) / 48.0);
  return img;
}

std::uint64_t fnv1a(const ImageTensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* p = reinterpret_cast<const unsigned char*>(t.values.data());
  for (std::size_t i = 0; i < t.values.size() * sizeof(float); ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

RgbImage gradient(std::size_t h, std::size_t w) {
  RgbImage img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>(255.0 * x / (w - 1));
      img.at(y, x, 1) = static_cast<std::uint8_t>(255.0 * y / (h - 1));
      img.at(y, x, 2) = static_cast<std::uint8_t>(127.0 * (x + y) / (w + h - 2));
    }
  return img;
}

}  // namespace

TEST_CASE("unit gains leave the image unchanged") {
  const ImageTensor img = reference_tensor();
  CHECK(white_balance_jitter(img, 5, {1.0, 1.0}) == img);
}

TEST_CASE("black stays black") {
  const ImageTensor black(8, 8);
  CHECK(white_balance_jitter(black, 9, {0.7, 1.3}) == black);
}

TEST_CASE("gains are per channel, in range and spatially uniform") {
  const ImageTensor img = reference_tensor();
  const ImageTensor out = white_balance_jitter(img, 17, {0.7, 1.3});
  for (std::size_t c = 0; c < 3; ++c) {
    double gain = -1.0;
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        const float in = img.at(c, y, x);
        const float o = out.at(c, y, x);
        CHECK(o >= 0.0f);
        CHECK(o <= 1.0f);
        if (in <= 0.0f || o >= 1.0f) continue;
        const double g = static_cast<double>(o) / in;
        if (gain < 0) gain = g;
        CHECK(g == doctest::Approx(gain).epsilon(1e-6));
      }
    CHECK(gain >= 0.7 - 1e-6);
    CHECK(gain <= 1.3 + 1e-6);
  }
}

TEST_CASE("seed 42 fixture is reproduced bit for bit") {
  const ImageTensor out = white_balance_jitter(reference_tensor(), 42, {0.7, 1.3});
  CHECK(out.at(0, 1, 2) == 0x1p+0f);
  CHECK(out.at(1, 1, 2) == 0x1.ce423ap-3f);
  CHECK(out.at(2, 1, 2) == 0x1.3f4a5p-1f);
  CHECK(fnv1a(out) == 0xb8481305f893c277ULL);
  CHECK(white_balance_jitter(reference_tensor(), 42, {0.7, 1.3}) == out);
  CHECK_FALSE(white_balance_jitter(reference_tensor(), 43, {0.7, 1.3}) == out);
}

TEST_CASE("flip commutes with white balance") {
  const ImageTensor img = reference_tensor();
  CHECK(flip_horizontal(white_balance_jitter(img, 3, {0.7, 1.3})) ==
        white_balance_jitter(flip_horizontal(img), 3, {0.7, 1.3}));
}

TEST_CASE("invalid gain ranges are rejected") {
  CHECK_THROWS_AS(white_balance_jitter(reference_tensor(), 1, {0.0, 1.0}), Error);
  CHECK_THROWS_AS(white_balance_jitter(reference_tensor(), 1, {1.2, 1.1}), Error);
}

TEST_CASE("resize to the same size only normalizes") {
  const RgbImage img = gradient(6, 5);
  const ImageTensor t = resize_normalize(img, 6, 5);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 5; ++x) CHECK(t.at(c, y, x) == static_cast<float>(img.at(y, x, c) / 255.0));
}

TEST_CASE("2x2 checkerboard averages to one half") {
  RgbImage img(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 255;
    img.at(1, 1, c) = 255;
  }
  const ImageTensor t = resize_normalize(img, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) CHECK(t.at(c, 0, 0) == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("smooth gradient survives a down-up resample") {
  const RgbImage img = gradient(64, 64);
  const ImageTensor small = resize_normalize(img, 32, 32);
  RgbImage mid(32, 32);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        mid.at(y, x, c) = static_cast<std::uint8_t>(std::lround(small.at(c, y, x) * 255.0f));
  const ImageTensor back = resize_normalize(mid, 64, 64);
  double worst = 0.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x)
        worst = std::max(worst, std::abs(back.at(c, y, x) - img.at(y, x, c) / 255.0));
  CHECK(worst < 0.02);
}

TEST_CASE("resize argument errors") {
  CHECK_THROWS_AS(resize_normalize(RgbImage{}, 4, 4), Error);
  CHECK_THROWS_AS(resize_normalize(gradient(4, 4), 0, 4), Error);
}
