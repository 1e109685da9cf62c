#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "dispersion/error.hpp"

namespace dispersion::io {

static_assert(std::endian::native == std::endian::little,
              "container formats are little-endian; big-endian hosts need byte swapping");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::IoFailure, "cannot open '" + path + "' for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error(ErrorKind::IoFailure, "write failed on '" + path_ + "'");
  }

  template <class T>
  void value(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes(&v, sizeof(T));
  }

  template <class T>
  void array(std::span<const T> values) {
    static_assert(std::is_trivially_copyable_v<T>);
    if (!values.empty()) bytes(values.data(), values.size_bytes());
  }

  void string(const std::string& s) {
    value<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::IoFailure, "close failed on '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::IoFailure, "cannot open '" + path + "' for reading");
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw Error(ErrorKind::IoFailure, "unexpected end of file in '" + path_ + "'");
  }

  template <class T>
  T value() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }

  template <class T>
  std::vector<T> array(std::size_t count) {
    std::vector<T> values(count);
    if (count != 0) bytes(values.data(), count * sizeof(T));
    return values;
  }

  std::string string(std::size_t max_len = 1u << 20) {
    const auto n = value<std::uint32_t>();
    if (n > max_len) throw Error(ErrorKind::IoFailure, "implausible string length in '" + path_ + "'");
    std::string s(n, '\0');
    if (n != 0) bytes(s.data(), n);
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace dispersion::io
