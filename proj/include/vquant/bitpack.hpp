#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vquant/errors.hpp"

namespace vquant {

inline void require_code_bits(int bits) {
  if (bits < 1 || bits > 8) throw ConfigError("code bitwidth must be in 1..8");
}

inline std::size_t packed_code_bytes(std::size_t count, int bits) {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

// Packs `bits`-wide codes densely, element 0 in the lowest bits of byte 0
// (little-endian bit order within each byte). Trailing bits of the last byte
// are zero.
inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int bits) {
  require_code_bits(bits);
  const std::uint32_t limit = 1u << bits;
  std::vector<std::uint8_t> out(packed_code_bytes(codes.size(), bits), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= limit) {
      throw ConfigError("code " + std::to_string(codes[i]) + " out of range for " +
                        std::to_string(bits) + " bits");
    }
    const std::size_t bit_pos = i * static_cast<std::size_t>(bits);
    std::size_t byte = bit_pos / 8;
    int offset = static_cast<int>(bit_pos % 8);
    std::uint32_t value = codes[i];
    int remaining = bits;
    while (remaining > 0) {
      out[byte] |= static_cast<std::uint8_t>((value << offset) & 0xFF);
      const int written = std::min(remaining, 8 - offset);
      value >>= written;
      remaining -= written;
      offset = 0;
      ++byte;
    }
  }
  return out;
}

inline std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits,
                                               std::size_t count) {
  require_code_bits(bits);
  if (bytes.size() < packed_code_bytes(count, bits))
    throw FormatError("packed code buffer too short");
  const std::uint32_t mask = (1u << bits) - 1u;
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t bit_pos = i * static_cast<std::size_t>(bits);
    std::size_t byte = bit_pos / 8;
    int offset = static_cast<int>(bit_pos % 8);
    std::uint32_t value = 0;
    int collected = 0;
    while (collected < bits) {
      value |= static_cast<std::uint32_t>(bytes[byte] >> offset) << collected;
      collected += 8 - offset;
      offset = 0;
      ++byte;
    }
    out[i] = value & mask;
  }
  return out;
}

// Extracts a single code without unpacking the whole array.
inline std::uint32_t packed_code_at(std::span<const std::uint8_t> bytes, int bits,
                                    std::size_t index) {
  const std::size_t bit_pos = index * static_cast<std::size_t>(bits);
  std::size_t byte = bit_pos / 8;
  int offset = static_cast<int>(bit_pos % 8);
  std::uint32_t value = 0;
  int collected = 0;
  while (collected < bits) {
    value |= static_cast<std::uint32_t>(bytes[byte] >> offset) << collected;
    collected += 8 - offset;
    offset = 0;
    ++byte;
  }
  return value & ((1u << bits) - 1u);
}

// 1-bit-per-element mask helpers (same bit order as pack_codes with bits=1).
inline std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> flags) {
  std::vector<std::uint8_t> out((flags.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

inline bool packed_bit_at(std::span<const std::uint8_t> bytes, std::size_t index) {
  return (bytes[index / 8] >> (index % 8)) & 1u;
}

}  // namespace vquant
