#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "roomsemble/error.hpp"

// Little-endian primitives shared by the model, feature, descriptor-cache and
// index file formats.
namespace roomsemble::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_needed(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::array<unsigned char, sizeof(T)> swapped{};
    for (std::size_t i = 0; i < sizeof(T); ++i) swapped[i] = bytes[sizeof(T) - 1 - i];
    return std::bit_cast<T>(swapped);
  } else {
    return value;
  }
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  v = byteswap_if_needed(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  v = byteswap_if_needed(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float v) {
  write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void require(std::istream& in, const char* what) {
  if (!in) fail(ErrorKind::FormatError, std::string("truncated stream while reading ") + what);
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in, "u32");
  return byteswap_if_needed(v);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in, "u64");
  return byteswap_if_needed(v);
}

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) {
    fail(ErrorKind::FormatError, "bad magic, expected '" + std::string(magic) + "'");
  }
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
  const auto n = read_u32(in);
  if (n > max_len) fail(ErrorKind::FormatError, "string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), n);
  require(in, "string");
  return s;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot create " + path);
  return out;
}

}  // namespace roomsemble::binio
