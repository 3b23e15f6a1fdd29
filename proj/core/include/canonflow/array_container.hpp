// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace canonflow {

/// Self-describing container of named arrays, used for checkpoints.
///
/// On-disk layout (all integers little-endian):
///   magic "CFARRAY1" (8 bytes), entry count u32, then per entry:
///   name length u16, name bytes, dtype u8, rank u8, dims u64[rank],
///   payload bytes. A FNV-1a 64-bit checksum of everything before it
///   closes the file. Doubles round-trip bit-exactly.
class ArrayContainer {
 public:
  enum class DType : std::uint8_t { kF64 = 1, kF32 = 2, kI64 = 3, kBytes = 4 };

  void put(const std::string& name, const Eigen::MatrixXd& value);
  void put(const std::string& name, const Eigen::MatrixXf& value);
  void put_scalar(const std::string& name, double value);
  void put_int(const std::string& name, std::int64_t value);
  void put_bytes(const std::string& name, const std::string& bytes);

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

  Eigen::MatrixXd get(const std::string& name) const;        // kF64 or kF32
  double get_scalar(const std::string& name) const;          // 1x1 kF64
  std::int64_t get_int(const std::string& name) const;
  std::string get_bytes(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static ArrayContainer load(const std::filesystem::path& path);

 private:
  struct Entry {
    DType dtype;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;
  };
  const Entry& entry(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

}  // namespace canonflow
