#include "unict/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace unict::io {

namespace {

static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian host");

void check_map(const Tensor<float>& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) != 1 || t.dim(1) == 0 || t.dim(2) == 0) {
    throw ImageError(std::string(what) + ": expected [1 x H x W], got " +
                     tensor::to_string(t.shape()));
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  return out;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in) {
  std::string t;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!t.empty()) break;
      continue;
    }
    t.push_back(c);
  }
  return t;
}

std::size_t positive(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos == s.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ImageError(path.string() + ": bad header value '" + s + "'");
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const Tensor<float>& map) {
  check_map(map, "write_pfm");
  const std::size_t h = map.dim(1), w = map.dim(2);
  auto out = open_out(path);
  out << "Pf\n" << w << " " << h << "\n-1.0\n";
  for (std::size_t y = h; y-- > 0;) {
    out.write(reinterpret_cast<const char*>(map.data() + y * w),
              static_cast<std::streamsize>(w * sizeof(float)));
  }
  if (!out) throw ImageError("write failed: " + path.string());
}

Tensor<float> read_pfm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (token(in) != "Pf") throw ImageError(path.string() + ": not a single-channel PFM");
  const std::size_t w = positive(token(in), path), h = positive(token(in), path);
  const std::string scale = token(in);
  if (scale.empty() || scale[0] != '-') {
    throw ImageError(path.string() + ": big-endian PFM is not supported");
  }
  Tensor<float> map({1, h, w});
  for (std::size_t y = h; y-- > 0;) {
    in.read(reinterpret_cast<char*>(map.data() + y * w),
            static_cast<std::streamsize>(w * sizeof(float)));
  }
  if (!in) throw ImageError(path.string() + ": truncated PFM");
  return map;
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& image) {
  check_map(image, "write_pgm");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> bytes(h * w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::isfinite(image[i]) ? std::clamp(image[i], 0.0f, 1.0f) : 0.0f;
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  auto out = open_out(path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("write failed: " + path.string());
}

Tensor<float> read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (token(in) != "P5") throw ImageError(path.string() + ": not a binary PGM");
  const std::size_t w = positive(token(in), path), h = positive(token(in), path);
  if (positive(token(in), path) != 255) throw ImageError(path.string() + ": only 8-bit PGM");
  std::vector<unsigned char> bytes(h * w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ImageError(path.string() + ": truncated PGM");
  Tensor<float> image({1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = bytes[i] / 255.0f;
  return image;
}

// Polynomial fit of the turbo colormap (A. Mikhailov, public domain).
std::array<std::uint8_t, 3> turbo(double t) {
  t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
  const double r = 0.13572138 + t * (4.61539260 + t * (-42.66032258 + t * (132.13108234 +
                   t * (-152.94239396 + t * 59.28637943))));
  const double g = 0.09140261 + t * (2.19418839 + t * (4.84296658 + t * (-14.18503333 +
                   t * (4.27729857 + t * 2.82956604))));
  const double b = 0.10667330 + t * (12.64194608 + t * (-60.58204836 + t * (110.36276771 +
                   t * (-89.90310912 + t * 27.34824973))));
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

void write_depth_png(const std::filesystem::path& path, const Tensor<float>& depth, double lo,
                     double hi) {
  check_map(depth, "write_depth_png");
  if (!(hi > lo)) throw ImageError("write_depth_png: empty colour range");
  const std::size_t h = depth.dim(1), w = depth.dim(2);
  std::vector<png_byte> rgb(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::array<std::uint8_t, 3> c{0, 0, 0};
    if (std::isfinite(depth[i])) c = turbo((depth[i] - lo) / (hi - lo));
    std::memcpy(&rgb[i * 3], c.data(), 3);
  }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, &rgb[y * w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace unict::io
