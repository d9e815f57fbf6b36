#pragma once

#include <bit>
#include <type_traits>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "chronoalign/error.hpp"

namespace chronoalign::binary {

// Little-endian scalar IO, independent of host byte order.

template <typename U>
void write_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("unexpected end of binary data");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void write_f32(std::ostream& os, float f) { write_le(os, std::bit_cast<std::uint32_t>(f)); }
inline void write_f64(std::ostream& os, double d) { write_le(os, std::bit_cast<std::uint64_t>(d)); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<std::uint32_t>(is)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<std::uint64_t>(is)); }

}  // namespace chronoalign::binary
