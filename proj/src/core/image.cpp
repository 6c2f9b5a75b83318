#include "core/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "core/common.hpp"

namespace mcf::img {

namespace {

double sample_clamped(const ImageF& im, double x, double y) {
  // Bilinear with coordinates clamped to the valid lattice.
  x = std::clamp(x, 0.0, static_cast<double>(im.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(im.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, im.width - 1);
  const int y1 = std::min(y0 + 1, im.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = im.at(x0, y0) * (1.0 - fx) + im.at(x1, y0) * fx;
  const double bot = im.at(x0, y1) * (1.0 - fx) + im.at(x1, y1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

}  // namespace

ImageF to_float(const Image8& im) {
  ImageF out(im.width, im.height);
  for (size_t i = 0; i < im.pixels.size(); ++i) out.pixels[i] = im.pixels[i] / 255.0;
  return out;
}

Image8 to_u8(const ImageF& im) {
  Image8 out(im.width, im.height);
  for (size_t i = 0; i < im.pixels.size(); ++i) {
    const double v = std::clamp(im.pixels[i], 0.0, 1.0);
    out.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

ImageF resize_bilinear(const ImageF& im, int out_w, int out_h) {
  if (im.width <= 0 || im.height <= 0) throw InvalidArgument("resize_bilinear: empty input image");
  if (out_w <= 0 || out_h <= 0) throw InvalidArgument("resize_bilinear: non-positive output size");
  ImageF out(out_w, out_h);
  // Pixel-center mapping so the sampled grid spans the source symmetrically.
  const double sx = static_cast<double>(im.width) / out_w;
  const double sy = static_cast<double>(im.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double srcy = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double srcx = (x + 0.5) * sx - 0.5;
      out.at(x, y) = sample_clamped(im, srcx, srcy);
    }
  }
  return out;
}

ImageF rotate(const ImageF& im, double degrees) {
  const double rad = degrees * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (im.width - 1) / 2.0, cy = (im.height - 1) / 2.0;
  ImageF out(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      // Inverse map: rotate destination coordinates back into the source.
      const double dx = x - cx, dy = y - cy;
      const double srcx = cx + c * dx + s * dy;
      const double srcy = cy - s * dx + c * dy;
      out.at(x, y) = sample_clamped(im, srcx, srcy);
    }
  }
  return out;
}

ImageF crop(const ImageF& im, int x0, int y0, int w, int h) {
  if (w <= 0 || h <= 0) throw InvalidArgument("crop: non-positive size");
  if (x0 < 0 || y0 < 0 || x0 + w > im.width || y0 + h > im.height)
    throw InvalidArgument("crop: window outside image bounds");
  ImageF out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = im.at(x0 + x, y0 + y);
  return out;
}

ImageF hflip(const ImageF& im) {
  ImageF out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) out.at(x, y) = im.at(im.width - 1 - x, y);
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image8& im) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << im.width << " " << im.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size()));
  if (!out) throw IoError("short write: " + path.string());
}

Image8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError("not a binary PGM (P5): " + path.string());
  int w = 0, h = 0, maxval = 0;
  // PGM allows comment lines between header tokens.
  auto next_int = [&](int& v) {
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> v;
  };
  next_int(w);
  next_int(h);
  next_int(maxval);
  if (!in || w <= 0 || h <= 0) throw ParseError("malformed PGM header: " + path.string());
  if (maxval != 255) throw ParseError("only 8-bit PGM supported: " + path.string());
  in.get();  // single whitespace after maxval
  Image8 im(w, h);
  in.read(reinterpret_cast<char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size()));
  if (!in) throw IoError("short read: " + path.string());
  return im;
}

}  // namespace mcf::img
