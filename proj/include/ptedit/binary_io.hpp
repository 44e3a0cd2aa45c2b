#pragma once

#include "ptedit/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace ptedit::binio {

// Little-endian encoding regardless of host byte order.

template <typename T>
void write_le(std::ostream& out, T value)
{
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

inline void write_f32(std::ostream& out, float value)
{
  write_le(out, std::bit_cast<std::uint32_t>(value));
}

template <typename T>
T read_le(std::istream& in)
{
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in)
    throw Error(ErrorKind::BadFormat, "unexpected end of stream");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return static_cast<T>(u);
}

inline float read_f32(std::istream& in)
{
  return std::bit_cast<float>(read_le<std::uint32_t>(in));
}

inline void expect_magic(std::istream& in, const char (&magic)[5])
{
  char got[4] = {};
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw Error(ErrorKind::BadFormat, std::string("bad magic, expected ") + magic);
}

} // namespace ptedit::binio
