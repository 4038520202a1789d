/**
 * @file protocol.hpp
 * @brief Wire format shared by the host library and the device.
 *
 * Frame layout:
 *
 *   0x7E | LEN | SEQ | OPCODE | PAYLOAD[LEN-2] | CRC8
 *
 * LEN counts SEQ, OPCODE and PAYLOAD (2..66). CRC8 (poly 0x07, init 0x00,
 * MSB-first, no reflection, no final XOR) covers LEN through the last payload
 * byte. There is no byte stuffing: receivers scan for 0x7E and rely on the CRC
 * to reject misaligned candidates. Multi-byte payload integers are little-endian.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "ctrlink/value.hpp"

namespace ctrlink::protocol {

inline constexpr std::uint8_t kSof = 0x7E;
inline constexpr std::size_t kMaxPayload = 64;
inline constexpr std::uint8_t kMinLen = 2;
inline constexpr std::uint8_t kMaxLen = 2 + kMaxPayload;
/// SOF + LEN + CRC around LEN bytes.
inline constexpr std::size_t kMaxFrameBytes = 1 + 1 + kMaxLen + 1;
/// Largest number of bytes the decoder holds for an unfinished frame.
inline constexpr std::size_t kMaxBufferedBytes = 1 + 1 + kMaxLen;

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint8_t kReplyBit = 0x80;

enum class Opcode : std::uint8_t {
  Ping = 0x01,
  Hello = 0x02,
  Attach = 0x03,
  Detach = 0x04,
  Read = 0x05,
  Write = 0x06,
  Subscribe = 0x07,
  Unsubscribe = 0x08,

  AckPing = 0x81,
  AckHello = 0x82,
  AckAttach = 0x83,
  AckDetach = 0x84,
  Value = 0x85,
  AckWrite = 0x86,
  AckSubscribe = 0x87,
  AckUnsubscribe = 0x88,

  Event = 0xC5,
  Error = 0xFF,
};

bool is_defined_opcode(std::uint8_t raw) noexcept;

struct Frame {
  std::uint8_t seq = 0;
  std::uint8_t opcode = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

std::uint8_t crc8(std::span<const std::uint8_t> data) noexcept;

/// Throws Error(PayloadTooLong) when the payload exceeds 64 bytes.
std::vector<std::uint8_t> encode_frame(const Frame& frame);

// ---------------------------------------------------------------------------
// Incremental decoder
// ---------------------------------------------------------------------------

struct BadCrc {
  friend bool operator==(const BadCrc&, const BadCrc&) = default;
};

/// `skipped` bytes were discarded while scanning for the next SOF.
struct Resync {
  std::size_t skipped = 0;
  friend bool operator==(const Resync&, const Resync&) = default;
};

using DecodeOutcome = std::variant<Frame, BadCrc, Resync>;

/**
 * Byte-at-a-time frame recogniser. Accepts arbitrary chunking: the outcome
 * sequence depends only on the concatenated byte stream.
 *
 * Every SOF byte opens a candidate that stays pending until its declared
 * length has arrived, including SOFs inside other candidates or inside frames
 * already decoded. A candidate is reported as a Frame on its last byte if its
 * CRC matches. A failing candidate is reported as BadCrc only if it was the
 * oldest pending candidate and overlaps no decoded frame; otherwise it is
 * dropped silently. Tracking overlapping candidates means a valid frame is
 * decoded whatever garbage precedes it, even when garbage and the start of the
 * frame happen to form a second CRC-valid frame.
 *
 * Bytes that end up in no Frame and are not the SOF of a reported BadCrc are
 * counted as garbage once no pending candidate covers them, and reported as a
 * Resync outcome immediately before the next Frame or BadCrc outcome.
 */
class FrameDecoder {
 public:
  std::vector<DecodeOutcome> feed(std::span<const std::uint8_t> bytes);
  void feed(std::span<const std::uint8_t> bytes, std::vector<DecodeOutcome>& out);

  /// Bytes held for the in-progress candidate (never above kMaxBufferedBytes).
  std::size_t buffered() const noexcept { return size_; }
  /// Garbage counted but not yet reported.
  std::size_t pending_garbage() const noexcept { return garbage_; }

  void reset() noexcept {
    size_ = 0;
    garbage_ = 0;
  }

 private:
  static constexpr std::uint8_t kClaimed = 1;    ///< part of a decoded frame
  static constexpr std::uint8_t kAccounted = 2;  ///< already reported

  void push(std::uint8_t byte, std::vector<DecodeOutcome>& out);
  void resolve(std::size_t start, std::vector<DecodeOutcome>& out);
  void emit(DecodeOutcome outcome, std::size_t start, std::vector<DecodeOutcome>& out);
  void trim();
  std::size_t candidate_end(std::size_t start) const noexcept;
  bool live(std::size_t start) const noexcept;

  std::array<std::uint8_t, kMaxFrameBytes> buf_{};
  std::array<std::uint8_t, kMaxFrameBytes> flags_{};
  std::size_t size_ = 0;
  std::size_t garbage_ = 0;
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct DeviceInfo {
  std::uint8_t protocol_version = kProtocolVersion;
  std::uint16_t firmware_version = 0;
  /// Bit i set ⇔ module type id i is supported.
  std::uint32_t capabilities = 0;

  bool supports(std::uint8_t module_type) const noexcept {
    return module_type < 32 && ((capabilities >> module_type) & 1U) != 0;
  }

  friend bool operator==(const DeviceInfo&, const DeviceInfo&) = default;
};

namespace cmd {

struct Ping {
  friend bool operator==(const Ping&, const Ping&) = default;
};
struct Hello {
  std::uint8_t protocol_version = kProtocolVersion;
  friend bool operator==(const Hello&, const Hello&) = default;
};
struct Attach {
  std::uint8_t module_type = 0;
  std::vector<std::uint8_t> pins;
  friend bool operator==(const Attach&, const Attach&) = default;
};
struct Detach {
  std::uint8_t channel = 0;
  friend bool operator==(const Detach&, const Detach&) = default;
};
struct Read {
  std::uint8_t channel = 0;
  friend bool operator==(const Read&, const Read&) = default;
};
struct Write {
  std::uint8_t channel = 0;
  ChannelValue value;
  friend bool operator==(const Write&, const Write&) = default;
};
struct Subscribe {
  std::uint8_t channel = 0;
  std::uint16_t period_ms = 0;
  friend bool operator==(const Subscribe&, const Subscribe&) = default;
};
struct Unsubscribe {
  std::uint8_t subscription = 0;
  friend bool operator==(const Unsubscribe&, const Unsubscribe&) = default;
};

struct AckPing {
  friend bool operator==(const AckPing&, const AckPing&) = default;
};
struct AckHello {
  DeviceInfo info;
  friend bool operator==(const AckHello&, const AckHello&) = default;
};
struct AckAttach {
  std::uint8_t channel = 0;
  friend bool operator==(const AckAttach&, const AckAttach&) = default;
};
struct AckDetach {
  std::uint8_t channel = 0;
  friend bool operator==(const AckDetach&, const AckDetach&) = default;
};
struct Value {
  std::uint8_t channel = 0;
  ChannelValue value;
  friend bool operator==(const Value&, const Value&) = default;
};
struct AckWrite {
  std::uint8_t channel = 0;
  friend bool operator==(const AckWrite&, const AckWrite&) = default;
};
struct AckSubscribe {
  std::uint8_t subscription = 0;
  friend bool operator==(const AckSubscribe&, const AckSubscribe&) = default;
};
struct AckUnsubscribe {
  std::uint8_t subscription = 0;
  friend bool operator==(const AckUnsubscribe&, const AckUnsubscribe&) = default;
};

/// Unsolicited. The frame's seq field carries the subscription id.
struct Event {
  std::uint8_t subscription = 0;
  ChannelValue value;
  friend bool operator==(const Event&, const Event&) = default;
};

struct Error {
  std::uint8_t code = 0;
  std::uint8_t offending_opcode = 0;
  friend bool operator==(const Error&, const Error&) = default;
};

}  // namespace cmd

using Command = std::variant<cmd::Ping, cmd::Hello, cmd::Attach, cmd::Detach, cmd::Read, cmd::Write,
                             cmd::Subscribe, cmd::Unsubscribe, cmd::AckPing, cmd::AckHello,
                             cmd::AckAttach, cmd::AckDetach, cmd::Value, cmd::AckWrite,
                             cmd::AckSubscribe, cmd::AckUnsubscribe, cmd::Event, cmd::Error>;

Opcode opcode_of(const Command& command) noexcept;

/// Payload layouts:
///   Attach      [module_type, pin_count, pins...]
///   Read/Detach [channel]
///   Write/Value [channel, kind, value...]
///   Subscribe   [channel, period lo, period hi]
///   Event       [kind, value...]            (seq = subscription id)
///   Error       [code, offending_opcode]
///   AckHello    [version, fw lo, fw hi, cap0, cap1, cap2, cap3]
/// Value bytes: Digital 1 byte (0/1), Analog u16, Scalar i32, Text raw bytes.
///
/// For Event the frame's seq is taken from the subscription id and the `seq`
/// argument is ignored. Throws Error(InvalidField) when a field does not fit.
Frame encode_command(std::uint8_t seq, const Command& command);

/// Throws Error(UnknownOpcode) or Error(MalformedPayload).
Command decode_command(const Frame& frame);

/// Size on the wire of a value inside a Write/Value payload.
std::size_t encoded_value_size(const ChannelValue& value) noexcept;

/// Largest Text that fits in a Write or Value frame.
inline constexpr std::size_t kMaxWireText = kMaxPayload - 2;

Frame build_handshake_request(std::uint8_t seq = 0);

/// Throws Error(VersionMismatch) when the device speaks another revision,
/// Error(MalformedPayload) when the frame is not a well-formed ACK_HELLO.
DeviceInfo parse_handshake_reply(const Frame& frame);

}  // namespace ctrlink::protocol
