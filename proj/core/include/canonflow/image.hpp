// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace canonflow {

/// Floating-point RGB image, values nominally in [0,1], row-major pixels.
/// Row 0 is the top of the image; rows increase downward.
class Image {
 public:
  Image() = default;
  Image(int height, int width, const Eigen::Vector3d& fill = Eigen::Vector3d::Zero());

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  Eigen::Vector3d pixel(int row, int col) const;
  void set_pixel(int row, int col, const Eigen::Vector3d& rgb);

  /// Bilinear sample at continuous (row, col); clamps to the image border.
  Eigen::Vector3d sample_bilinear(double row, double col) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;  // height*width*3
};

/// Binary mask; nonzero means foreground. Same row convention as Image.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t at(int row, int col) const;
  void set(int row, int col, std::uint8_t v);
  std::int64_t count_nonzero() const;

  const std::vector<std::uint8_t>& data() const { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// 8-bit PNG round trip. Writing quantizes with round(255*clamp(v,0,1)).
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Masks are stored as 8-bit grayscale PNG, 0 background / 255 foreground.
void write_png(const std::filesystem::path& path, const Mask& mask);
Mask read_png_mask(const std::filesystem::path& path);

std::uint8_t quantize_u8(double v);

}  // namespace canonflow
