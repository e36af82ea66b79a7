#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/crc.hpp>

#include "gridcomp/error.hpp"

namespace gridcomp::detail {

// Little-endian fixed-width encoding into a byte buffer (x86-64 / aarch64
// hosts are little-endian; the layout is what gets documented).
class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t size) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_raw(s.data(), s.size());
  }
  template <class T>
  void put_vector(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    put_raw(v.data(), v.size() * sizeof(T));
  }
  const std::vector<char>& bytes() const { return bytes_; }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}

  template <class T>
  T get() {
    T value;
    get_raw(&value, sizeof(T));
    return value;
  }
  void get_raw(void* out, std::size_t size) {
    if (size > size_ - pos_) throw IoError(context_ + ": unexpected end of data");
    std::memcpy(out, data_ + pos_, size);
    pos_ += size;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > size_ - pos_) throw IoError(context_ + ": unexpected end of data");
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (size_ - pos_) / sizeof(T)) throw IoError(context_ + ": unexpected end of data");
    std::vector<T> v(n);
    get_raw(v.data(), n * sizeof(T));
    return v;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string context_;
};

inline std::uint32_t crc32(const char* data, std::size_t size) {
  boost::crc_32_type crc;
  crc.process_bytes(data, size);
  return crc.checksum();
}

}  // namespace gridcomp::detail
