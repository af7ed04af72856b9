// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

// Little-endian byte packing shared by the binary file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vg3s/error.hpp"

namespace vg3s::binio {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed for " + path);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }

  std::vector<char> buf_;
};

inline std::vector<char> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  std::size_t size() const noexcept { return buf_.size(); }
  const std::string& path() const noexcept { return path_; }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
  double f64() { return std::bit_cast<double>(get(8)); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(FormatErrorKind::kTruncated, path_ + ": header truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

/// Checks an 8-byte magic whose last character is the format version.
inline void expect_magic(Reader& r, std::string_view magic) {
  if (r.remaining() < magic.size()) {
    throw FormatError(FormatErrorKind::kMagicMismatch, r.path() + ": too short for magic " + std::string(magic));
  }
  const std::string got = r.bytes(magic.size());
  if (got == magic) return;
  if (got.compare(0, magic.size() - 1, magic.substr(0, magic.size() - 1)) == 0) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      r.path() + ": unsupported version '" + got.substr(magic.size() - 1) + "', expected '" +
                          std::string(magic.substr(magic.size() - 1)) + "'");
  }
  throw FormatError(FormatErrorKind::kMagicMismatch, r.path() + ": bad magic, expected " + std::string(magic));
}

/// a * b, or false on 64-bit overflow.
inline bool mul_checked(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  return !__builtin_mul_overflow(a, b, &out);
}

}  // namespace vg3s::binio
