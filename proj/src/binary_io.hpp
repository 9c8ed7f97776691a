#pragma once

// Little-endian primitive encoding shared by the flow-file and checkpoint formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "vfi/errors.hpp"

namespace vfi::binary {

template <typename U>
void put_uint(std::ostream& os, U value) {
  char bytes[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(U));
}

template <typename U>
U get_uint(std::istream& is, const std::string& what) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(what + ": truncated data");
  }
  U value = 0;
  for (size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void put_f32(std::ostream& os, float v) { put_uint(os, std::bit_cast<uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<uint64_t>(v)); }
inline void put_i32(std::ostream& os, int32_t v) { put_uint(os, std::bit_cast<uint32_t>(v)); }
inline void put_i64(std::ostream& os, int64_t v) { put_uint(os, std::bit_cast<uint64_t>(v)); }

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_uint<uint32_t>(is, what));
}
inline double get_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_uint<uint64_t>(is, what));
}
inline int32_t get_i32(std::istream& is, const std::string& what) {
  return std::bit_cast<int32_t>(get_uint<uint32_t>(is, what));
}
inline int64_t get_i64(std::istream& is, const std::string& what) {
  return std::bit_cast<int64_t>(get_uint<uint64_t>(is, what));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_uint<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get_uint<uint32_t>(is, what);
  if (n > (1u << 24)) throw FormatError(what + ": implausible string length");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw FormatError(what + ": truncated data");
  return s;
}

}  // namespace vfi::binary
