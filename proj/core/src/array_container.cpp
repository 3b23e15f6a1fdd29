// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/array_container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace canonflow {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'A', 'R', 'R', 'A', 'Y', '1'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void append_pod(std::vector<std::uint8_t>& buf, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T read_pod(const std::vector<std::uint8_t>& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("array container: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::size_t dtype_size(ArrayContainer::DType d) {
  switch (d) {
    case ArrayContainer::DType::kF64: return 8;
    case ArrayContainer::DType::kF32: return 4;
    case ArrayContainer::DType::kI64: return 8;
    case ArrayContainer::DType::kBytes: return 1;
  }
  throw std::runtime_error("array container: unknown dtype");
}

}  // namespace

void ArrayContainer::put(const std::string& name, const Eigen::MatrixXd& value) {
  Entry e;
  e.dtype = DType::kF64;
  e.dims = {static_cast<std::uint64_t>(value.rows()), static_cast<std::uint64_t>(value.cols())};
  e.payload.resize(sizeof(double) * value.size());
  std::memcpy(e.payload.data(), value.data(), e.payload.size());
  entries_[name] = std::move(e);
}

void ArrayContainer::put(const std::string& name, const Eigen::MatrixXf& value) {
  Entry e;
  e.dtype = DType::kF32;
  e.dims = {static_cast<std::uint64_t>(value.rows()), static_cast<std::uint64_t>(value.cols())};
  e.payload.resize(sizeof(float) * value.size());
  std::memcpy(e.payload.data(), value.data(), e.payload.size());
  entries_[name] = std::move(e);
}

void ArrayContainer::put_scalar(const std::string& name, double value) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = value;
  put(name, m);
}

void ArrayContainer::put_int(const std::string& name, std::int64_t value) {
  Entry e;
  e.dtype = DType::kI64;
  e.dims = {1};
  e.payload.resize(sizeof(std::int64_t));
  std::memcpy(e.payload.data(), &value, sizeof(value));
  entries_[name] = std::move(e);
}

void ArrayContainer::put_bytes(const std::string& name, const std::string& bytes) {
  Entry e;
  e.dtype = DType::kBytes;
  e.dims = {bytes.size()};
  e.payload.assign(bytes.begin(), bytes.end());
  entries_[name] = std::move(e);
}

bool ArrayContainer::contains(const std::string& name) const { return entries_.count(name) != 0; }

std::vector<std::string> ArrayContainer::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

const ArrayContainer::Entry& ArrayContainer::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("array container: missing entry '" + name + "'");
  return it->second;
}

Eigen::MatrixXd ArrayContainer::get(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dims.size() != 2) throw std::runtime_error("array container: '" + name + "' is not a matrix");
  const auto rows = static_cast<Eigen::Index>(e.dims[0]);
  const auto cols = static_cast<Eigen::Index>(e.dims[1]);
  Eigen::MatrixXd out(rows, cols);
  if (e.dtype == DType::kF64) {
    std::memcpy(out.data(), e.payload.data(), e.payload.size());
  } else if (e.dtype == DType::kF32) {
    Eigen::MatrixXf tmp(rows, cols);
    std::memcpy(tmp.data(), e.payload.data(), e.payload.size());
    out = tmp.cast<double>();
  } else {
    throw std::runtime_error("array container: '" + name + "' is not float data");
  }
  return out;
}

double ArrayContainer::get_scalar(const std::string& name) const {
  const Eigen::MatrixXd m = get(name);
  if (m.size() != 1) throw std::runtime_error("array container: '" + name + "' is not a scalar");
  return m(0, 0);
}

std::int64_t ArrayContainer::get_int(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kI64) throw std::runtime_error("array container: '" + name + "' is not an int");
  std::int64_t v;
  std::memcpy(&v, e.payload.data(), sizeof(v));
  return v;
}

std::string ArrayContainer::get_bytes(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kBytes) throw std::runtime_error("array container: '" + name + "' is not bytes");
  return std::string(e.payload.begin(), e.payload.end());
}

void ArrayContainer::save(const std::filesystem::path& path) const {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + sizeof(kMagic));
  append_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    append_pod<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    append_pod<std::uint8_t>(buf, static_cast<std::uint8_t>(e.dtype));
    append_pod<std::uint8_t>(buf, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) append_pod<std::uint64_t>(buf, d);
    buf.insert(buf.end(), e.payload.begin(), e.payload.end());
  }
  append_pod<std::uint64_t>(buf, fnv1a(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("array container: cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("array container: write failed: " + path.string());
}

ArrayContainer ArrayContainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("array container: cannot open: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("array container: bad magic (not a container file): " + path.string());
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a(buf.data(), body)) {
    throw std::runtime_error("array container: checksum mismatch (corrupted file): " + path.string());
  }

  ArrayContainer c;
  std::size_t off = sizeof(kMagic);
  const auto count = read_pod<std::uint32_t>(buf, off);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(buf, off);
    if (off + name_len > body) throw std::runtime_error("array container: truncated file");
    std::string name(buf.begin() + static_cast<std::ptrdiff_t>(off),
                     buf.begin() + static_cast<std::ptrdiff_t>(off + name_len));
    off += name_len;
    Entry e;
    e.dtype = static_cast<DType>(read_pod<std::uint8_t>(buf, off));
    const auto rank = read_pod<std::uint8_t>(buf, off);
    std::uint64_t total = 1;
    for (int d = 0; d < rank; ++d) {
      e.dims.push_back(read_pod<std::uint64_t>(buf, off));
      total *= e.dims.back();
    }
    const std::size_t nbytes = total * dtype_size(e.dtype);
    if (off + nbytes > body) throw std::runtime_error("array container: truncated file");
    e.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                     buf.begin() + static_cast<std::ptrdiff_t>(off + nbytes));
    off += nbytes;
    c.entries_[std::move(name)] = std::move(e);
  }
  if (off != body) throw std::runtime_error("array container: trailing bytes: " + path.string());
  return c;
}

}  // namespace canonflow
