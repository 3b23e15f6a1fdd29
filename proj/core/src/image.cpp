// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace canonflow {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
  throw std::runtime_error("png: " + std::string(what) + ": " + path.string());
}

void write_png_bytes(const std::filesystem::path& path, const std::uint8_t* bytes,
                     int height, int width, int channels) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "libpng error while writing");
  }
  png_init_io(png, fp.get());
  const int color_type = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) {
    rows[r] = const_cast<png_bytep>(bytes + static_cast<std::size_t>(r) * width * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, int* height,
                                         int* width, int* channels) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail(path, "cannot open for reading");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng error while reading");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize everything to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);

  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  *channels = static_cast<int>(png_get_channels(png, info));
  if (*channels != 1 && *channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported channel count");
  }

  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(*height) * *width * *channels);
  std::vector<png_bytep> rows(*height);
  for (int r = 0; r < *height; ++r) {
    rows[r] = bytes.data() + static_cast<std::size_t>(r) * *width * *channels;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

}  // namespace

Image::Image(int height, int width, const Eigen::Vector3d& fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * 3) {
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.x();
    data_[i + 1] = fill.y();
    data_[i + 2] = fill.z();
  }
}

namespace {

std::size_t checked_offset(int row, int col, int height, int width, int channels) {
  if (row < 0 || row >= height || col < 0 || col >= width) {
    throw std::out_of_range("image: pixel (" + std::to_string(row) + ", " +
                            std::to_string(col) + ") outside " + std::to_string(height) +
                            "x" + std::to_string(width));
  }
  return (static_cast<std::size_t>(row) * width + col) * channels;
}

}  // namespace

Eigen::Vector3d Image::pixel(int row, int col) const {
  const std::size_t i = checked_offset(row, col, height_, width_, 3);
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set_pixel(int row, int col, const Eigen::Vector3d& rgb) {
  const std::size_t i = checked_offset(row, col, height_, width_, 3);
  data_[i] = rgb.x();
  data_[i + 1] = rgb.y();
  data_[i + 2] = rgb.z();
}

Eigen::Vector3d Image::sample_bilinear(double row, double col) const {
  const double r = std::clamp(row, 0.0, static_cast<double>(height_ - 1));
  const double c = std::clamp(col, 0.0, static_cast<double>(width_ - 1));
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const int r1 = std::min(r0 + 1, height_ - 1);
  const int c1 = std::min(c0 + 1, width_ - 1);
  const double fr = r - r0;
  const double fc = c - c0;
  return pixel(r0, c0) * (1 - fr) * (1 - fc) + pixel(r0, c1) * (1 - fr) * fc +
         pixel(r1, c0) * fr * (1 - fc) + pixel(r1, c1) * fr * fc;
}

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * width, fill) {}

std::uint8_t Mask::at(int row, int col) const {
  return data_[checked_offset(row, col, height_, width_, 1)];
}

void Mask::set(int row, int col, std::uint8_t v) {
  data_[checked_offset(row, col, height_, width_, 1)] = v;
}

std::int64_t Mask::count_nonzero() const {
  std::int64_t n = 0;
  for (auto v : data_) n += v != 0;
  return n;
}

std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_u8(image.data()[i]);
  write_png_bytes(path, bytes.data(), image.height(), image.width(), 3);
}

Image read_png(const std::filesystem::path& path) {
  int h = 0, w = 0, ch = 0;
  const auto bytes = read_png_bytes(path, &h, &w, &ch);
  Image img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * w + c) * ch;
      Eigen::Vector3d rgb;
      if (ch == 3) {
        rgb = {bytes[i] / 255.0, bytes[i + 1] / 255.0, bytes[i + 2] / 255.0};
      } else {
        rgb.setConstant(bytes[i] / 255.0);
      }
      img.set_pixel(r, c, rgb);
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data()[i] ? 255 : 0;
  write_png_bytes(path, bytes.data(), mask.height(), mask.width(), 1);
}

Mask read_png_mask(const std::filesystem::path& path) {
  int h = 0, w = 0, ch = 0;
  const auto bytes = read_png_bytes(path, &h, &w, &ch);
  Mask mask(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * w + c) * ch;
      mask.set(r, c, bytes[i] >= 128 ? 1 : 0);
    }
  }
  return mask;
}

}  // namespace canonflow
