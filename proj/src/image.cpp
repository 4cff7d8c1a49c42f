#include "blendtrack/image.hpp"

#include "blendtrack/error.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace blendtrack {

RgbImage flip_horizontal(const RgbImage& image) {
  RgbImage out(image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::size_t mx = image.width - 1 - x;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, mx, c) = image.at(y, x, c);
    }
  }
  return out;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width);
  for (std::size_t c = 0; c < ImageTensor::kChannels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, image.width - 1 - x) = image.at(c, y, x);
    }
  }
  return out;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::Io, "cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(ErrorCategory::Io, "write failed for " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::Io, "cannot open image " + path.string());
  const auto bad = [&](const std::string& what) {
    fail(ErrorCategory::Parse, path.string() + ": " + what);
  };
  if (next_token(in) != "P6") bad("not a binary PPM (P6)");
  std::size_t w = 0;
  std::size_t h = 0;
  int maxval = 0;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    bad("malformed PPM header");
  }
  if (w == 0 || h == 0) bad("zero-sized image");
  if (maxval != 255) bad("only maxval 255 is supported");
  RgbImage image(h, w);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) bad("unexpected end of file");
  return image;
}

}  // namespace blendtrack
