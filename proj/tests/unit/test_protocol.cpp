#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ctrlink/protocol.hpp"
#include "expect_error.hpp"
#include "oracles.hpp"

using namespace ctrlink;
using namespace ctrlink::protocol;

namespace {

std::vector<DecodeOutcome> feed_all(const std::vector<std::uint8_t>& bytes) {
  FrameDecoder d;
  return d.feed(bytes);
}

#define check_throws_code(fn, code) CHECK(errc_of(fn) == (code))

}  // namespace

TEST_CASE("crc8 known inputs") {
  CHECK(crc8({}) == 0x00);
  const std::vector<std::uint8_t> zero{0x00};
  CHECK(crc8(zero) == 0x00);
  const auto check = oracle::ascii("123456789");
  CHECK(crc8(check) == oracle::crc8_bitwise(check));
  CHECK(oracle::crc8_bitwise(check) == 0xF4);
}

TEST_CASE("crc8 agrees with the bitwise reference") {
  oracle::Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint8_t> data(oracle::uniform<std::size_t>(rng, 0, 100));
    for (auto& b : data) b = oracle::byte(rng);
    REQUIRE(crc8(data) == oracle::crc8_bitwise(data));
  }
}

TEST_CASE("encode_frame layout") {
  CHECK(encode_frame({0, 0x01, {}}) == oracle::frame_bytes(0, 0x01, {}));
  CHECK(encode_frame({7, 0x05, {0x02}}) == oracle::frame_bytes(7, 0x05, {0x02}));
  const auto ping = encode_frame({0, 0x01, {}});
  CHECK(ping == std::vector<std::uint8_t>{0x7E, 0x02, 0x00, 0x01, oracle::crc8_bitwise({0x02, 0x00, 0x01})});
  check_throws_code([] { encode_frame({0, 0x06, std::vector<std::uint8_t>(65)}); }, Errc::PayloadTooLong);
  CHECK_NOTHROW(encode_frame({0, 0x06, std::vector<std::uint8_t>(64)}));
}

TEST_CASE("decoder: byte-at-a-time yields one frame on the last byte") {
  const auto bytes = encode_frame({3, 0x01, {}});
  FrameDecoder d;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto out = d.feed(std::span(&bytes[i], 1));
    if (i + 1 < bytes.size()) {
      CHECK(out.empty());
    } else {
      REQUIRE(out.size() == 1);
      CHECK(std::get<Frame>(out[0]) == Frame{3, 0x01, {}});
    }
  }
}

TEST_CASE("decoder: garbage prefix reports Resync then Frame") {
  std::vector<std::uint8_t> bytes{0xAA, 0xBB};
  const auto ping = encode_frame({0, 0x01, {}});
  bytes.insert(bytes.end(), ping.begin(), ping.end());
  const auto out = feed_all(bytes);
  REQUIRE(out.size() == 2);
  CHECK(std::get<Resync>(out[0]).skipped == 2);
  CHECK(std::get<Frame>(out[1]) == Frame{0, 0x01, {}});
}

TEST_CASE("decoder: bad CRC is reported and the next frame still decodes") {
  auto bad = encode_frame({1, 0x05, {0x02}});
  bad.back() ^= 0xFF;
  const auto good = encode_frame({2, 0x05, {0x03}});
  auto bytes = bad;
  bytes.insert(bytes.end(), good.begin(), good.end());
  const auto out = feed_all(bytes);
  REQUIRE(!out.empty());
  CHECK(std::holds_alternative<BadCrc>(out.front()));
  CHECK(std::get<Frame>(out.back()) == Frame{2, 0x05, {0x03}});
  std::size_t frames = 0;
  for (const auto& o : out) frames += std::holds_alternative<Frame>(o);
  CHECK(frames == 1);
}

TEST_CASE("decoder: a garbage SOF that claims a long frame does not hide a later frame") {
  std::vector<std::uint8_t> bytes{0x7E, 0x40, 0x11};
  const auto ping = encode_frame({9, 0x01, {}});
  bytes.insert(bytes.end(), ping.begin(), ping.end());
  const auto out = feed_all(bytes);
  REQUIRE(!out.empty());
  CHECK(std::get<Frame>(out.back()) == Frame{9, 0x01, {}});
}

TEST_CASE("decoder: garbage that forms a CRC-valid frame with the start of a real frame does not hide it") {
  // 7E 05 A B | 7E 02 09 01 CRC: choose A, B so that the first eight bytes are
  // themselves a valid frame ending inside the real one.
  const auto real = oracle::frame_bytes(9, 0x01, {});
  std::vector<std::uint8_t> bytes;
  for (unsigned a = 0; a < 256 && bytes.empty(); ++a) {
    for (unsigned b = 0; b < 256; ++b) {
      if (a == 0x7E || b == 0x7E) continue;
      const std::vector<std::uint8_t> body{0x05, static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b),
                                           real[0], real[1], real[2]};
      if (oracle::crc8_bitwise(body) != real[3]) continue;
      bytes = {0x7E, 0x05, static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)};
      break;
    }
  }
  REQUIRE(!bytes.empty());
  bytes.insert(bytes.end(), real.begin(), real.end());
  const auto out = feed_all(bytes);
  REQUIRE(out.size() == 2);
  CHECK(std::get<Frame>(out[0]) == Frame{bytes[2], bytes[3], {0x7E, 0x02, 0x09}});
  CHECK(std::get<Frame>(out[1]) == Frame{9, 0x01, {}});
}

TEST_CASE("decoder: a frame after any random garbage is decoded") {
  oracle::Rng rng(77);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<std::uint8_t> bytes(oracle::uniform<std::size_t>(rng, 0, 150));
    for (auto& b : bytes) b = oracle::uniform<int>(rng, 0, 3) == 0 ? 0x7E : oracle::byte(rng);
    std::vector<std::uint8_t> payload(oracle::uniform<std::size_t>(rng, 0, 64));
    for (auto& b : payload) b = oracle::uniform<int>(rng, 0, 5) == 0 ? 0x7E : oracle::byte(rng);
    const Frame target{oracle::byte(rng), oracle::byte(rng), payload};
    const auto tail = oracle::frame_bytes(target.seq, target.opcode, payload);
    bytes.insert(bytes.end(), tail.begin(), tail.end());
    const auto out = feed_all(bytes);
    const bool found = std::any_of(out.begin(), out.end(), [&](const DecodeOutcome& o) {
      const auto* f = std::get_if<Frame>(&o);
      return f != nullptr && *f == target;
    });
    REQUIRE(found);
  }
}

TEST_CASE("decoder: back-to-back frames decode exactly, with no other outcomes") {
  oracle::Rng rng(78);
  for (int round = 0; round < 300; ++round) {
    std::vector<std::uint8_t> stream;
    std::vector<DecodeOutcome> want;
    const auto n = oracle::uniform<int>(rng, 1, 20);
    for (int i = 0; i < n; ++i) {
      Frame f{oracle::byte(rng), oracle::byte(rng), {}};
      f.payload.resize(oracle::uniform<std::size_t>(rng, 0, 64));
      for (auto& b : f.payload) b = oracle::uniform<int>(rng, 0, 15) == 0 ? 0x7E : oracle::byte(rng);
      const auto bytes = oracle::frame_bytes(f.seq, f.opcode, f.payload);
      stream.insert(stream.end(), bytes.begin(), bytes.end());
      want.emplace_back(std::move(f));
    }
    const auto got = feed_all(stream);
    // An overlapping candidate can only add a frame when its CRC collides;
    // every real frame must be present, in order, with no Resync or BadCrc.
    std::vector<DecodeOutcome> frames;
    for (const auto& o : got) {
      REQUIRE(std::holds_alternative<Frame>(o));
      if (std::find(want.begin(), want.end(), o) != want.end()) frames.push_back(o);
    }
    REQUIRE(frames == want);
  }
}

TEST_CASE("decoder: invalid LEN bytes are skipped") {
  std::vector<std::uint8_t> bytes{0x7E, 0x01, 0x7E, 0x43};
  const auto ping = encode_frame({4, 0x01, {}});
  bytes.insert(bytes.end(), ping.begin(), ping.end());
  const auto out = feed_all(bytes);
  REQUIRE(out.size() == 2);
  CHECK(std::get<Resync>(out[0]).skipped == 4);
  CHECK(std::holds_alternative<Frame>(out[1]));
}

TEST_CASE("decoder: chunking invariance and buffer bound on random streams") {
  oracle::Rng rng(5);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::uint8_t> stream;
    for (int part = 0; part < 8; ++part) {
      if (oracle::uniform<int>(rng, 0, 1) == 0) {
        const auto frame = encode_frame(encode_command(oracle::byte(rng), oracle::random_command(rng)));
        stream.insert(stream.end(), frame.begin(), frame.end());
      } else {
        const auto n = oracle::uniform<int>(rng, 0, 40);
        for (int i = 0; i < n; ++i) stream.push_back(oracle::uniform<int>(rng, 0, 3) == 0 ? 0x7E : oracle::byte(rng));
      }
    }
    const auto whole = feed_all(stream);
    FrameDecoder chunked;
    std::vector<DecodeOutcome> pieces;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      const auto n = std::min(stream.size() - pos, oracle::uniform<std::size_t>(rng, 1, 17));
      chunked.feed(std::span(stream.data() + pos, n), pieces);
      CHECK(chunked.buffered() <= kMaxBufferedBytes);
      pos += n;
    }
    REQUIRE(pieces == whole);
  }
}

TEST_CASE("encode_command layouts") {
  CHECK(encode_command(1, cmd::Read{3}) == Frame{1, 0x05, {0x03}});
  CHECK(encode_command(2, cmd::Subscribe{1, 300}).payload == std::vector<std::uint8_t>{0x01, 300 & 0xFF, 300 >> 8});
  CHECK(encode_command(0, cmd::Attach{0x03, {0xA0}}).payload == std::vector<std::uint8_t>{0x03, 0x01, 0xA0});
  CHECK(encode_command(0, cmd::Write{4, Analog{0x0203}}).payload == std::vector<std::uint8_t>{4, 1, 0x03, 0x02});
  CHECK(encode_command(0, cmd::Write{4, Scalar{-2}}).payload == std::vector<std::uint8_t>{4, 2, 0xFE, 0xFF, 0xFF, 0xFF});
  CHECK(encode_command(0, cmd::Value{1, Digital{true}}).payload == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(encode_command(0, cmd::Value{1, Text{"Hi"}}).payload == std::vector<std::uint8_t>{1, 3, 'H', 'i'});
  CHECK(encode_command(0, cmd::Error{5, 0x05}) == Frame{0, 0xFF, {5, 5}});
  const auto ev = encode_command(0, cmd::Event{7, Analog{1}});
  CHECK(ev.seq == 7);
  CHECK(ev.opcode == 0xC5);
}

TEST_CASE("encode_command rejects fields outside their encoding") {
  check_throws_code([] { encode_command(0, cmd::Write{0, Analog{1024}}); }, Errc::InvalidField);
  check_throws_code([] { encode_command(0, cmd::Write{0, Text{std::string(63, 'a')}}); }, Errc::InvalidField);
  check_throws_code([] { encode_command(0, cmd::Write{0, Text{"\x01"}}); }, Errc::InvalidField);
  check_throws_code([] { encode_command(0, cmd::Attach{0, std::vector<std::uint8_t>(63)}); }, Errc::InvalidField);
}

TEST_CASE("decode_command examples") {
  CHECK(decode_command({0, 0x05, {0x03}}) == Command{cmd::Read{3}});
  check_throws_code([] { decode_command({0, 0x05, {}}); }, Errc::MalformedPayload);
  check_throws_code([] { decode_command({0, 0x05, {1, 2}}); }, Errc::MalformedPayload);
  check_throws_code([] { decode_command({0, 0x60, {}}); }, Errc::UnknownOpcode);
  check_throws_code([] { decode_command({0, 0x06, {0, 9, 1}}); }, Errc::MalformedPayload);
  check_throws_code([] { decode_command({0, 0x06, {0, 1, 0x00, 0x04}}); }, Errc::MalformedPayload);
  check_throws_code([] { decode_command({0, 0x03, {0, 2, 1}}); }, Errc::MalformedPayload);
}

TEST_CASE("command round trip through bytes") {
  oracle::Rng rng(1234);
  for (int i = 0; i < 10000; ++i) {
    const auto command = oracle::random_command(rng);
    const auto seq = oracle::byte(rng);
    const auto bytes = encode_frame(encode_command(seq, command));
    const auto out = feed_all(bytes);
    REQUIRE(out.size() == 1);
    const auto& frame = std::get<Frame>(out[0]);
    REQUIRE(decode_command(frame) == command);
    if (const auto* ev = std::get_if<cmd::Event>(&command)) {
      CHECK(frame.seq == ev->subscription);
    } else {
      CHECK(frame.seq == seq);
    }
    CHECK(encode_frame(frame) == bytes);
  }
}

TEST_CASE("handshake messages") {
  CHECK(build_handshake_request() == Frame{0, 0x02, {0x01}});
  const auto info = parse_handshake_reply({0, 0x82, {0x01, 0x00, 0x01, 0xFF, 0xFF, 0x01, 0x00}});
  CHECK(info.protocol_version == 1);
  CHECK(info.firmware_version == 0x0100);
  for (std::uint8_t id = 0; id < 32; ++id) CHECK(info.supports(id) == (id <= 16));
  check_throws_code([] { parse_handshake_reply({0, 0x82, {0x02, 0, 1, 0, 0, 0, 0}}); }, Errc::VersionMismatch);
  check_throws_code([] { parse_handshake_reply({0, 0x82, {0x01, 0, 1}}); }, Errc::MalformedPayload);
  check_throws_code([] { parse_handshake_reply({0, 0x81, {}}); }, Errc::MalformedPayload);
}

TEST_CASE("reply opcodes set the high bit of the request") {
  for (std::uint8_t op = 1; op <= 8; ++op) {
    CHECK(is_defined_opcode(op));
    CHECK(is_defined_opcode(op | 0x80));
  }
  CHECK(is_defined_opcode(0xC5));
  CHECK(is_defined_opcode(0xFF));
  CHECK_FALSE(is_defined_opcode(0x00));
  CHECK_FALSE(is_defined_opcode(0x60));
}
