#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "vat/codec/stream.hpp"
#include "vat/nd/rng.hpp"

using namespace vat;
using codec::PackedPayload;
using codec::PackMode;
using codec::TokenStreamHeader;

namespace {

tok::TokenPyramid pyramid_from(const std::vector<std::vector<int>>& scales) {
  tok::TokenPyramid p;
  p.scales = scales;
  return p;
}

tok::TokenPyramid random_pyramid(int vocab, nd::Rng& rng) {
  tok::TokenPyramid p;
  int len = 1 + rng.uniform_int(3);
  const int scales = 1 + rng.uniform_int(4);
  for (int s = 0; s < scales; ++s) {
    std::vector<int> scale(static_cast<std::size_t>(len));
    for (auto& t : scale) t = rng.uniform_int(vocab);
    p.scales.push_back(scale);
    len += 1 + rng.uniform_int(5);
  }
  return p;
}

}  // namespace

TEST_CASE("header validation and size formulas") {
  TokenStreamHeader h;
  h.codebook_size = 256;
  h.mode = PackMode::kBytes;
  h.bytes_per_token = 2;
  h.scale_lengths = {1, 4, 16};
  CHECK_NOTHROW(h.validate());
  CHECK(h.total_tokens() == 21);
  CHECK(h.bits_per_token() == 16);
  CHECK(h.payload_bytes() == 42);
  CHECK(h.stream_bytes() == 16 + 12 + 42);

  // ceil(log2 V) across the vocabulary sizes the pipeline uses.
  const std::vector<std::pair<std::uint32_t, int>> widths = {
      {2, 1}, {3, 2}, {4, 2}, {5, 3}, {256, 8}, {257, 9}, {2048, 11}, {16384, 14}};
  for (auto [v, bits] : widths) {
    TokenStreamHeader b;
    b.codebook_size = v;
    b.mode = PackMode::kBits;
    b.scale_lengths = {3};
    CHECK(b.bits_per_token() == bits);
    CHECK(b.payload_bytes() == static_cast<std::uint64_t>((3 * bits + 7) / 8));
  }

  auto expect_invalid = [](TokenStreamHeader bad) {
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  {
    TokenStreamHeader b = h;
    b.codebook_size = 1;
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.scale_lengths = {1, 4, 4};
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.scale_lengths = {0, 4};
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.bytes_per_token = 0;
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.bytes_per_token = 5;
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.codebook_size = 2048;
    b.bytes_per_token = 1;  // 8 bits cannot hold index 2047
    expect_invalid(b);
  }
  {
    TokenStreamHeader b = h;
    b.version = 7;
    expect_invalid(b);
  }
  // Header-only streams (no scales) are legal.
  TokenStreamHeader empty = h;
  empty.scale_lengths = {};
  CHECK_NOTHROW(empty.validate());
  CHECK(empty.payload_bytes() == 0);
}

TEST_CASE("payload sizes match the reference arithmetic") {
  // 256 tokens from a 256-way codebook at one byte each -> 256 bytes.
  std::vector<int> tokens(256);
  for (int i = 0; i < 256; ++i) tokens[i] = i;
  PackedPayload one_byte = codec::pack(pyramid_from({tokens}), 256, PackMode::kBytes, 1);
  CHECK(one_byte.bytes.size() == 256);

  // Full-resolution schedule: 2220 tokens at two bytes each -> 4440 bytes.
  const std::vector<int> schedule = {1, 4, 9, 16, 25, 36, 64, 100, 169, 196, 576, 1024};
  tok::TokenPyramid big;
  int total = 0;
  for (int len : schedule) {
    big.scales.emplace_back(static_cast<std::size_t>(len), 0);
    total += len;
  }
  CHECK(total == 2220);
  PackedPayload two_bytes = codec::pack(big, 2048, PackMode::kBytes, 2);
  CHECK(two_bytes.bytes.size() == 4440);
  CHECK(two_bytes.header.payload_bytes() == 4440);

  // The same schedule bit-packed at 11 bits per token.
  PackedPayload bits = codec::pack(big, 2048, PackMode::kBits);
  CHECK(bits.bytes.size() == (2220 * 11 + 7) / 8);
}

TEST_CASE("bit packing matches hand-computed patterns") {
  // 11-bit tokens 1 and 2: bit 10 and bit 20 of the stream are set.
  PackedPayload p = codec::pack(pyramid_from({{1}, {2, 0}}), 2048, PackMode::kBits);
  // 3 tokens * 11 bits = 33 bits -> 5 bytes.
  REQUIRE(p.bytes.size() == 5);
  CHECK(p.bytes[0] == 0x00);
  CHECK(p.bytes[1] == 0x20);
  CHECK(p.bytes[2] == 0x08);
  CHECK(p.bytes[3] == 0x00);
  CHECK(p.bytes[4] == 0x00);

  // A single binary token occupies one padded byte, value in the top bit.
  PackedPayload one = codec::pack(pyramid_from({{1}}), 2, PackMode::kBits);
  REQUIRE(one.bytes.size() == 1);
  CHECK(one.bytes[0] == 0x80);
  PackedPayload zero = codec::pack(pyramid_from({{0}}), 2, PackMode::kBits);
  REQUIRE(zero.bytes.size() == 1);
  CHECK(zero.bytes[0] == 0x00);

  // Byte mode writes each token big-endian.
  PackedPayload be = codec::pack(pyramid_from({{1, 258}}), 2048, PackMode::kBytes, 2);
  REQUIRE(be.bytes.size() == 4);
  CHECK(be.bytes[0] == 0x00);
  CHECK(be.bytes[1] == 0x01);
  CHECK(be.bytes[2] == 0x01);
  CHECK(be.bytes[3] == 0x02);
}

TEST_CASE("pack/unpack round-trips exactly across vocabularies and modes") {
  nd::Rng rng(808);
  for (int vocab : {2, 5, 256, 2048, 16384}) {
    for (int trial = 0; trial < 20; ++trial) {
      tok::TokenPyramid p = random_pyramid(vocab, rng);
      for (PackMode mode : {PackMode::kBytes, PackMode::kBits}) {
        PackedPayload packed = codec::pack(p, vocab, mode, vocab <= 256 ? 1 : 2);
        CHECK(packed.bytes.size() == packed.header.payload_bytes());
        tok::TokenPyramid back = codec::unpack(packed);
        CHECK(back.scales == p.scales);

        std::vector<std::uint8_t> wire = codec::serialize(packed);
        PackedPayload reread = codec::deserialize(wire);
        CHECK(reread.header.codebook_size == packed.header.codebook_size);
        CHECK(reread.bytes == packed.bytes);
        CHECK(codec::unpack(reread).scales == p.scales);
      }
    }
  }
}

TEST_CASE("empty pyramid produces a header-only stream") {
  PackedPayload p = codec::pack(tok::TokenPyramid{}, 256, PackMode::kBytes, 2);
  CHECK(p.bytes.empty());
  std::vector<std::uint8_t> wire = codec::serialize(p);
  CHECK(wire.size() == 16);  // fixed header, no scale table, no payload
  tok::TokenPyramid back = codec::unpack(codec::deserialize(wire));
  CHECK(back.scales.empty());
}

TEST_CASE("pack rejects out-of-range indices and bad configurations") {
  CHECK_THROWS_AS(codec::pack(pyramid_from({{256}}), 256, PackMode::kBytes, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(codec::pack(pyramid_from({{-1}}), 256, PackMode::kBytes, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(codec::pack(pyramid_from({{0}}), 1, PackMode::kBytes, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(codec::pack(pyramid_from({{0}}), 2048, PackMode::kBytes, 1),
                  std::invalid_argument);
  // Pyramid whose scale lengths are not strictly increasing.
  CHECK_THROWS_AS(codec::pack(pyramid_from({{0, 1}, {2, 3}}), 256, PackMode::kBytes, 2),
                  std::invalid_argument);
}

TEST_CASE("malformed streams are rejected with byte offsets") {
  nd::Rng rng(909);
  tok::TokenPyramid p = random_pyramid(256, rng);
  PackedPayload packed = codec::pack(p, 256, PackMode::kBits);
  std::vector<std::uint8_t> wire = codec::serialize(packed);

  {
    std::vector<std::uint8_t> bad = wire;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(codec::deserialize(bad), doctest::Contains("bad magic"),
                         std::runtime_error);
  }
  {
    std::vector<std::uint8_t> cut(wire.begin(), wire.begin() + 10);  // inside the header
    try {
      codec::deserialize(cut);
      FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  {
    std::vector<std::uint8_t> cut(wire.begin(), wire.end() - 1);  // inside the payload
    CHECK_THROWS_WITH_AS(codec::deserialize(cut), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  {
    std::vector<std::uint8_t> fat = wire;
    fat.push_back(0);
    CHECK_THROWS_WITH_AS(codec::deserialize(fat), doctest::Contains("trailing"),
                         std::runtime_error);
  }
  {
    PackedPayload short_payload = packed;
    short_payload.bytes.pop_back();
    CHECK_THROWS_AS(codec::unpack(short_payload), std::runtime_error);
  }
  {
    // Bit patterns can encode indices past V-1; unpack must reject them.
    PackedPayload crafted;
    crafted.header.codebook_size = 5;  // 3 bits, max legal index 4
    crafted.header.mode = PackMode::kBits;
    crafted.header.bytes_per_token = 0;
    crafted.header.scale_lengths = {1};
    crafted.bytes = {0xE0};  // value 7
    CHECK_THROWS_WITH_AS(codec::unpack(crafted), doctest::Contains("outside"),
                         std::runtime_error);
  }
}

TEST_CASE("streams survive a disk round trip") {
  nd::Rng rng(111);
  tok::TokenPyramid p = random_pyramid(2048, rng);
  PackedPayload packed = codec::pack(p, 2048, PackMode::kBits);
  const std::string path = "codec_roundtrip_test.vatk";
  codec::write_stream(packed, path);
  PackedPayload back = codec::read_stream(path);
  std::remove(path.c_str());
  CHECK(back.header.codebook_size == 2048);
  CHECK(codec::unpack(back).scales == p.scales);
  CHECK_THROWS_AS(codec::read_stream("does_not_exist.vatk"), std::runtime_error);
}

TEST_CASE("compression ratio arithmetic") {
  CHECK(codec::compression_ratio(1048576, 256) == doctest::Approx(4096.0));
  CHECK(codec::compression_ratio(4440, 4440) == doctest::Approx(1.0));
  const double r = codec::compression_ratio(1048576, 4440);
  CHECK(r == doctest::Approx(1048576.0 / 4440.0));
  CHECK(r > 236.0);
  CHECK(r < 237.0);
  CHECK_THROWS_AS(codec::compression_ratio(0, 100), std::invalid_argument);
  CHECK_THROWS_AS(codec::compression_ratio(100, 0), std::invalid_argument);
}
