#pragma once

// Little-endian binary helpers shared by the MVPC1 / MVVP1 / MVVX1 codecs.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvp/errors.hpp"

namespace mvp::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::string_view(data_.data() + pos_, magic.size()) != magic)
      throw ParseError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
    pos_ += magic.size();
  }

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint32_t u32(const char* what) { return uint<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return uint<std::uint64_t>(what); }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(uint<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }

  /// Reads a float32 and rejects NaN/Inf.
  float finite_f32(const char* what) {
    const std::uint64_t at = pos_;
    const float v = std::bit_cast<float>(uint<std::uint32_t>(what));
    if (!std::isfinite(v)) throw ParseError(std::string("non-finite ") + what, at);
    return v;
  }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("truncated while reading ") + what, pos_);
  }

  void expect_end() const {
    if (remaining() != 0) throw ParseError("trailing bytes after payload", pos_);
  }

 private:
  std::vector<char> data_;
  std::uint64_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + path);
}

inline void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace mvp::io
