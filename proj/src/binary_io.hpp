#pragma once

// Little-endian primitive readers/writers shared by the model and state files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace seqscope::io {

class TruncatedError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

template <typename UInt>
void put_uint(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> buf{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename UInt>
UInt get_uint(std::istream& in) {
  std::array<unsigned char, sizeof(UInt)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw TruncatedError("unexpected end of file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<UInt>(v);
}

inline void put_f64(std::ostream& out, double v) { put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_uint<std::uint64_t>(in)); }

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline bool read_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4] = {};
  in.read(buf, 4);
  return in.gcount() == 4 && std::memcmp(buf, magic, 4) == 0;
}

}  // namespace seqscope::io
