#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "curvyilt/grid.hpp"
#include "curvyilt/raster.hpp"

namespace curvyilt {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::uint8_t to_byte(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace detail

// 8-bit grayscale PNG, 0 <-> 0.0 and 255 <-> 1.0. Values outside [0,1] saturate.
inline void write_png_gray8(const std::string& path, const GrayImage& img) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for write: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) row[x] = detail::to_byte(img(y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png_binary(const std::string& path, const BinaryImage& img) {
  write_png_gray8(path, img.to_gray());
}

// Reads any PNG as 8-bit grayscale (libpng transforms handle color/stripping).
inline GrayImage read_png_gray8(const std::string& path, double nm_per_px = 1.0) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for read: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw FormatError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  GrayImage img(GridSpec{w, h, nm_per_px});
  std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img(y, x) = row[x] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline BinaryImage read_png_binary(const std::string& path, double nm_per_px = 1.0) {
  return binarize(read_png_gray8(path, nm_per_px), 0.5);
}

// 16-bit portable graymap (P5, maxval 65535, big-endian samples) for
// continuous masks. The pixel pitch rides along in a comment so round-trips
// keep physical units.
inline void write_pgm16(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "P5\n# nm_per_px " << img.spec.nm_per_px << "\n"
      << img.width() << ' ' << img.height() << "\n65535\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * 2);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp(img(y, x), 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      row[2 * x] = static_cast<std::uint8_t>(q >> 8);
      row[2 * x + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

inline GrayImage read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw FormatError("not a P5 graymap: " + path);

  double nm_per_px = 1.0;
  auto next_token = [&]() -> std::string {
    std::string tok;
    for (;;) {
      if (!(in >> tok)) throw FormatError("truncated graymap header: " + path);
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        std::istringstream cs(tok.substr(1) + rest);
        std::string key;
        double value;
        if (cs >> key >> value && key == "nm_per_px") nm_per_px = value;
        continue;
      }
      return tok;
    }
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 65535) throw FormatError("expected 16-bit graymap: " + path);
  in.get();  // single whitespace after maxval

  GrayImage img(GridSpec{w, h, nm_per_px});
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw FormatError("truncated graymap data: " + path);
    for (int x = 0; x < w; ++x) {
      const int q = (row[2 * x] << 8) | row[2 * x + 1];
      img(y, x) = q / 65535.0;
    }
  }
  return img;
}

}  // namespace curvyilt
