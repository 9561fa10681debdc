#pragma once

// Little-endian helpers shared by the feature container and checkpoints.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "geometer/error.hpp"

namespace geometer::detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                        static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

inline void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void write_f32s(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float f : values) write_f32(out, f);
  }
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw Error(ErrorCode::kLengthMismatch, what + ": truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void read_f32s(std::istream& in, std::span<float> out, const std::string& what) {
  const auto bytes = static_cast<std::streamsize>(out.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(out.data()), bytes);
  if (in.gcount() != bytes) throw Error(ErrorCode::kLengthMismatch, what + ": payload shorter than header");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : out) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) | (u >> 24);
      f = std::bit_cast<float>(u);
    }
  }
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0)
    throw Error(ErrorCode::kBadHeader, what + ": bad magic, expected \"" + std::string(magic) + "\"");
}

inline bool at_eof(std::istream& in) { return in.peek() == std::char_traits<char>::eof(); }

}  // namespace geometer::detail
