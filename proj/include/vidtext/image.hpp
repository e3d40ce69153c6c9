#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vidtext/common.hpp"

namespace vidtext {

// H x W x 3 raster, channel values in [0,1], row-major, channel fastest.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pix;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pix(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int y, int x, int c) {
    return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int y, int x, int c) const {
    return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Frames are stored on disk as binary PPM (P6, 8-bit): deterministic bytes,
// no decoder dependency.
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image file: " + path.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pix.size());
  for (std::size_t i = 0; i < img.pix.size(); ++i) {
    float v = img.pix[i];
    if (v < 0.0f) v = 0.0f;
    if (v > 1.0f) v = 1.0f;
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("short write: " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read image file: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError("not a P6 ppm: " + path.string());
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("bad ppm header: " + path.string());
  is.get();  // single whitespace after header
  Image img(w, h);
  std::vector<unsigned char> bytes(img.pix.size());
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("truncated ppm payload: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pix[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

}  // namespace vidtext
