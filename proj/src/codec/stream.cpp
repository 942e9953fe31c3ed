#include "vat/codec/stream.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace vat::codec {

namespace {

int bits_for_vocab(std::uint32_t v) {
  int bits = 0;
  std::uint32_t span = v - 1;  // largest representable index
  while (span > 0) {
    ++bits;
    span >>= 1;
  }
  return bits == 0 ? 1 : bits;  // V == 2 still needs one bit
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

// Bounds-checked little-endian reads that report where a truncation happened.
class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw std::runtime_error("token stream truncated at byte " + std::to_string(bytes_.size()) +
                               ": need " + std::to_string(n) + " more byte(s) for " + what +
                               " at offset " + std::to_string(pos_));
    }
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TokenStreamHeader::validate() const {
  if (version != kVersion) {
    throw std::invalid_argument("unsupported token stream version " + std::to_string(version));
  }
  if (codebook_size < 2) {
    throw std::invalid_argument("token stream codebook size must be at least 2");
  }
  if (mode != PackMode::kBytes && mode != PackMode::kBits) {
    throw std::invalid_argument("unknown token stream mode");
  }
  if (mode == PackMode::kBytes) {
    if (bytes_per_token < 1 || bytes_per_token > 4) {
      throw std::invalid_argument("bytes per token must be in [1, 4]");
    }
    const int capacity_bits = 8 * bytes_per_token;
    if (capacity_bits < bits_for_vocab(codebook_size)) {
      throw std::invalid_argument("byte width " + std::to_string(bytes_per_token) +
                                  " cannot hold indices of a size-" +
                                  std::to_string(codebook_size) + " codebook");
    }
  }
  for (std::size_t s = 0; s < scale_lengths.size(); ++s) {
    if (scale_lengths[s] == 0) throw std::invalid_argument("scale lengths must be positive");
    if (s > 0 && scale_lengths[s] <= scale_lengths[s - 1]) {
      throw std::invalid_argument("scale lengths must be strictly increasing");
    }
  }
}

std::uint64_t TokenStreamHeader::total_tokens() const {
  return std::accumulate(scale_lengths.begin(), scale_lengths.end(), std::uint64_t{0});
}

int TokenStreamHeader::bits_per_token() const {
  return mode == PackMode::kBits ? bits_for_vocab(codebook_size) : 8 * bytes_per_token;
}

std::uint64_t TokenStreamHeader::payload_bytes() const {
  const std::uint64_t bits = total_tokens() * static_cast<std::uint64_t>(bits_per_token());
  return mode == PackMode::kBits ? (bits + 7) / 8 : bits / 8;
}

std::uint64_t TokenStreamHeader::stream_bytes() const {
  return 16 + 4 * static_cast<std::uint64_t>(scale_lengths.size()) + payload_bytes();
}

PackedPayload pack(const tok::TokenPyramid& pyramid, int codebook_size, PackMode mode,
                   int bytes_per_token) {
  if (codebook_size < 2) throw std::invalid_argument("pack: codebook size must be at least 2");
  PackedPayload out;
  out.header.mode = mode;
  out.header.bytes_per_token =
      mode == PackMode::kBytes ? static_cast<std::uint8_t>(bytes_per_token) : 0;
  out.header.codebook_size = static_cast<std::uint32_t>(codebook_size);
  for (const auto& scale : pyramid.scales) {
    out.header.scale_lengths.push_back(static_cast<std::uint32_t>(scale.size()));
  }
  out.header.validate();

  for (const auto& scale : pyramid.scales) {
    for (int t : scale) {
      if (t < 0 || t >= codebook_size) {
        throw std::invalid_argument("pack: token index " + std::to_string(t) +
                                    " outside codebook of size " + std::to_string(codebook_size));
      }
    }
  }

  out.bytes.reserve(static_cast<std::size_t>(out.header.payload_bytes()));
  if (mode == PackMode::kBytes) {
    const int width = out.header.bytes_per_token;
    for (const auto& scale : pyramid.scales) {
      for (int t : scale) {
        for (int b = width - 1; b >= 0; --b) {  // big-endian within the token
          out.bytes.push_back(static_cast<std::uint8_t>((static_cast<std::uint32_t>(t) >> (8 * b)) & 0xff));
        }
      }
    }
  } else {
    const int nbits = out.header.bits_per_token();
    std::uint8_t cur = 0;
    int filled = 0;
    for (const auto& scale : pyramid.scales) {
      for (int t : scale) {
        for (int b = nbits - 1; b >= 0; --b) {  // MSB first
          cur = static_cast<std::uint8_t>((cur << 1) | ((static_cast<std::uint32_t>(t) >> b) & 1u));
          if (++filled == 8) {
            out.bytes.push_back(cur);
            cur = 0;
            filled = 0;
          }
        }
      }
    }
    if (filled > 0) out.bytes.push_back(static_cast<std::uint8_t>(cur << (8 - filled)));
  }
  return out;
}

tok::TokenPyramid unpack(const PackedPayload& payload) {
  payload.header.validate();
  const std::uint64_t want = payload.header.payload_bytes();
  if (payload.bytes.size() != want) {
    throw std::runtime_error("token stream truncated at byte " +
                             std::to_string(payload.bytes.size()) + ": header implies " +
                             std::to_string(want) + " payload byte(s)");
  }

  tok::TokenPyramid out;
  if (payload.header.mode == PackMode::kBytes) {
    const int width = payload.header.bytes_per_token;
    std::size_t pos = 0;
    for (std::uint32_t len : payload.header.scale_lengths) {
      std::vector<int> scale(len);
      for (std::uint32_t i = 0; i < len; ++i) {
        std::uint32_t v = 0;
        for (int b = 0; b < width; ++b) v = (v << 8) | payload.bytes[pos++];
        scale[i] = static_cast<int>(v);
      }
      out.scales.push_back(std::move(scale));
    }
  } else {
    const int nbits = payload.header.bits_per_token();
    std::uint64_t bitpos = 0;
    auto read_bit = [&]() {
      const std::uint8_t byte = payload.bytes[bitpos / 8];
      const int shift = 7 - static_cast<int>(bitpos % 8);
      ++bitpos;
      return (byte >> shift) & 1u;
    };
    for (std::uint32_t len : payload.header.scale_lengths) {
      std::vector<int> scale(len);
      for (std::uint32_t i = 0; i < len; ++i) {
        std::uint32_t v = 0;
        for (int b = 0; b < nbits; ++b) v = (v << 1) | read_bit();
        scale[i] = static_cast<int>(v);
      }
      out.scales.push_back(std::move(scale));
    }
  }

  for (const auto& scale : out.scales) {
    for (int t : scale) {
      if (t >= static_cast<int>(payload.header.codebook_size)) {
        throw std::runtime_error("token stream holds index " + std::to_string(t) +
                                 " outside its declared codebook of size " +
                                 std::to_string(payload.header.codebook_size));
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize(const PackedPayload& payload) {
  payload.header.validate();
  if (payload.bytes.size() != payload.header.payload_bytes()) {
    throw std::invalid_argument("serialize: payload size does not match its header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(payload.header.stream_bytes()));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, payload.header.version);
  out.push_back(static_cast<std::uint8_t>(payload.header.mode));
  out.push_back(payload.header.bytes_per_token);
  put_u32(out, payload.header.codebook_size);
  put_u32(out, static_cast<std::uint32_t>(payload.header.scale_lengths.size()));
  for (std::uint32_t len : payload.header.scale_lengths) put_u32(out, len);
  out.insert(out.end(), payload.bytes.begin(), payload.bytes.end());
  return out;
}

PackedPayload deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.cursor(), kMagic, 4) != 0) {
    throw std::runtime_error("not a token stream: bad magic at byte 0");
  }
  for (int i = 0; i < 4; ++i) r.u8("magic");

  PackedPayload out;
  out.header.version = r.u16("version");
  const std::uint8_t mode_byte = r.u8("mode");
  if (mode_byte > 1) {
    throw std::runtime_error("token stream has unknown mode " + std::to_string(mode_byte) +
                             " at byte 6");
  }
  out.header.mode = static_cast<PackMode>(mode_byte);
  out.header.bytes_per_token = r.u8("bytes per token");
  out.header.codebook_size = r.u32("codebook size");
  const std::uint32_t scales = r.u32("scale count");
  out.header.scale_lengths.resize(scales);
  for (std::uint32_t s = 0; s < scales; ++s) out.header.scale_lengths[s] = r.u32("scale length");
  try {
    out.header.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("token stream header invalid: ") + e.what());
  }

  const std::uint64_t want = out.header.payload_bytes();
  if (r.remaining() < want) {
    throw std::runtime_error("token stream truncated at byte " + std::to_string(bytes.size()) +
                             ": header implies " + std::to_string(want) + " payload byte(s) from offset " +
                             std::to_string(r.pos()));
  }
  if (r.remaining() > want) {
    throw std::runtime_error("token stream has " + std::to_string(r.remaining() - want) +
                             " trailing byte(s) after offset " + std::to_string(r.pos() + want));
  }
  out.bytes.assign(r.cursor(), r.cursor() + want);
  return out;
}

void write_stream(const PackedPayload& payload, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize(payload);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing token stream to " + path);
}

PackedPayload read_stream(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open token stream " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

double compression_ratio(std::uint64_t source_bytes, std::uint64_t compressed_bytes) {
  if (source_bytes == 0 || compressed_bytes == 0) {
    throw std::invalid_argument("compression ratio needs positive byte counts");
  }
  return static_cast<double>(source_bytes) / static_cast<double>(compressed_bytes);
}

}  // namespace vat::codec
