#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mcf::img {

// Row-major 8-bit grayscale image.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, uint8_t fill = 0) : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Row-major float grayscale image, values nominally in [0, 1].
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  ImageF() = default;
  ImageF(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

ImageF to_float(const Image8& im);           // scales to [0, 1]
Image8 to_u8(const ImageF& im);              // clamps and quantizes

// Bilinear resampling with edge clamping.
ImageF resize_bilinear(const ImageF& im, int out_w, int out_h);

// Rotation about the image center by `degrees`, bilinear, edge-clamped.
ImageF rotate(const ImageF& im, double degrees);

ImageF crop(const ImageF& im, int x0, int y0, int w, int h);
ImageF hflip(const ImageF& im);

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const Image8& im);
Image8 read_pgm(const std::filesystem::path& path);

}  // namespace mcf::img
