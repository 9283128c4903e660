#include "retinagan/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace retinagan::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("libpng: ") + msg);
}
void png_warning_fn(png_structp, png_const_charp) {}

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

void write_png(const std::filesystem::path& path, const RawPng& raw) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  const int color = raw.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, raw.width, raw.height, raw.bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or gamma chunks: output bytes depend on pixels only.
  png_write_info(png, info);

  const int bytes_per_sample = raw.bit_depth / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(raw.width) * raw.channels * bytes_per_sample;
  std::vector<png_byte> row(row_bytes);
  for (int r = 0; r < raw.height; ++r) {
    for (int i = 0; i < raw.width * raw.channels; ++i) {
      const std::uint16_t v = raw.samples[static_cast<std::size_t>(r) * raw.width * raw.channels + i];
      if (bytes_per_sample == 1) {
        row[i] = static_cast<png_byte>(v);
      } else {
        row[2 * i] = static_cast<png_byte>(v >> 8);
        row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

RawPng read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_read_info(png, info);
  RawPng raw;
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && raw.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (raw.bit_depth < 8) raw.bit_depth = 8;
  png_read_update_info(png, info);
  raw.channels = png_get_channels(png, info);

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(row_bytes);
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  for (int r = 0; r < raw.height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int i = 0; i < raw.width * raw.channels; ++i) {
      std::uint16_t v = raw.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                                            : row[i];
      raw.samples[static_cast<std::size_t>(r) * raw.width * raw.channels + i] = v;
    }
  }
  png_read_end(png, nullptr);
  return raw;
}

std::uint16_t quantize(double v, double max_level) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return static_cast<std::uint16_t>(max_level);
  return static_cast<std::uint16_t>(std::lround(v * max_level));
}

RawPng gray_raw(const Image& image, int bit_depth) {
  RawPng raw{image.cols(), image.rows(), 1, bit_depth, {}};
  const double max_level = bit_depth == 16 ? 65535.0 : 255.0;
  raw.samples.reserve(image.size());
  for (double v : image.data()) raw.samples.push_back(quantize(v, max_level));
  return raw;
}

}  // namespace

void write_gray8(const std::filesystem::path& path, const Image& image) {
  write_png(path, gray_raw(image, 8));
}

void write_gray16(const std::filesystem::path& path, const Image& image) {
  write_png(path, gray_raw(image, 16));
}

Image read_gray(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  if (raw.channels != 1) throw std::runtime_error(path.string() + ": expected grayscale PNG");
  const double max_level = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Image out(raw.height, raw.width);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = raw.samples[i] / max_level;
  return out;
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  RawPng raw{labels.cols(), labels.rows(), 1, 8, {}};
  raw.samples.assign(labels.data().begin(), labels.data().end());
  write_png(path, raw);
}

LabelMap read_labels(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  if (raw.channels != 1 || raw.bit_depth != 8) {
    throw std::runtime_error(path.string() + ": expected 8-bit class-index PNG");
  }
  LabelMap out(raw.height, raw.width);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<std::uint8_t>(raw.samples[i]);
  return out;
}

void write_rgb8(const std::filesystem::path& path, const RgbImage& image) {
  RawPng raw{image.cols(), image.rows(), 3, 8, {}};
  raw.samples.reserve(image.size() * 3);
  for (const Rgb& p : image.data()) {
    raw.samples.push_back(quantize(p.r, 255.0));
    raw.samples.push_back(quantize(p.g, 255.0));
    raw.samples.push_back(quantize(p.b, 255.0));
  }
  write_png(path, raw);
}

RgbImage read_rgb(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  if (raw.channels != 3) throw std::runtime_error(path.string() + ": expected RGB PNG");
  const double max_level = raw.bit_depth == 16 ? 65535.0 : 255.0;
  RgbImage out(raw.height, raw.width);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = {raw.samples[3 * i] / max_level, raw.samples[3 * i + 1] / max_level,
              raw.samples[3 * i + 2] / max_level};
  }
  return out;
}

}  // namespace retinagan::io
