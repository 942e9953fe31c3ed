#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vat/tok/pyramid.hpp"

// Token bitstream serialization. A stream is a fixed header followed by the
// packed token indices of one pyramid. All functions here are pure and
// thread-safe.
//
// Byte layout (all header integers little-endian):
//   offset 0   4 bytes   magic "VATK"
//   offset 4   2 bytes   format version (currently 1)
//   offset 6   1 byte    mode: 0 = fixed bytes per token, 1 = packed bits
//   offset 7   1 byte    bytes per token (byte mode; 0 in bit mode)
//   offset 8   4 bytes   codebook size V
//   offset 12  4 bytes   scale count S
//   offset 16  4*S bytes per-scale token counts, strictly increasing
//   then the payload:
//     byte mode: each index as bytes_per_token big-endian bytes
//     bit  mode: each index as ceil(log2 V) bits, MSB first, packed back to
//                back; the final byte is zero-padded
//
// Contract violations by the caller (bad codebook size, out-of-range indices,
// widths too narrow for V) throw std::invalid_argument; malformed or
// truncated input streams throw std::runtime_error naming the byte offset.
namespace vat::codec {

inline constexpr std::uint8_t kMagic[4] = {'V', 'A', 'T', 'K'};
inline constexpr std::uint16_t kVersion = 1;

enum class PackMode : std::uint8_t { kBytes = 0, kBits = 1 };

struct TokenStreamHeader {
  std::uint16_t version = kVersion;
  PackMode mode = PackMode::kBytes;
  std::uint8_t bytes_per_token = 2;       // used in byte mode only
  std::uint32_t codebook_size = 0;        // V
  std::vector<std::uint32_t> scale_lengths;  // strictly increasing; may be empty

  // Throws std::invalid_argument on violations (V < 2, zero or non-increasing
  // lengths, byte width outside [1,4] or too narrow to hold V-1).
  void validate() const;

  std::uint64_t total_tokens() const;
  int bits_per_token() const;        // ceil(log2 V) in bit mode, 8*bytes otherwise
  std::uint64_t payload_bytes() const;  // exact payload size implied by the header
  std::uint64_t stream_bytes() const;   // header + payload
};

struct PackedPayload {
  TokenStreamHeader header;
  std::vector<std::uint8_t> bytes;  // packed indices, not including the header
};

// Packs a pyramid's indices. bytes_per_token is only consulted in byte mode
// (default 2, matching the usual two-bytes-per-token accounting).
PackedPayload pack(const tok::TokenPyramid& pyramid, int codebook_size, PackMode mode,
                   int bytes_per_token = 2);

// Exact inverse of pack for any payload whose byte count matches its header.
tok::TokenPyramid unpack(const PackedPayload& payload);

// Header + payload as one byte buffer (the on-disk format).
std::vector<std::uint8_t> serialize(const PackedPayload& payload);
PackedPayload deserialize(const std::vector<std::uint8_t>& bytes);

void write_stream(const PackedPayload& payload, const std::string& path);
PackedPayload read_stream(const std::string& path);

// source_bytes / compressed_bytes. Throws std::invalid_argument unless both
// are positive.
double compression_ratio(std::uint64_t source_bytes, std::uint64_t compressed_bytes);

}  // namespace vat::codec
