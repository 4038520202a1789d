#include "ctrlink/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "ctrlink/error.hpp"

namespace ctrlink::protocol {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<std::uint8_t, 256> make_crc_table() {
  std::array<std::uint8_t, 256> table{};
  for (unsigned i = 0; i < 256; ++i) {
    auto crc = static_cast<std::uint8_t>(i);
    for (int b = 0; b < 8; ++b) {
      crc = (crc & 0x80U) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07U)
                          : static_cast<std::uint8_t>(crc << 1);
    }
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

bool valid_len(std::uint8_t len) noexcept { return len >= kMinLen && len <= kMaxLen; }

// --- payload writer / reader -------------------------------------------------

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  void value(const ChannelValue& value) {
    u8(static_cast<std::uint8_t>(kind_of(value)));
    std::visit(overloaded{
                   [&](const Digital& d) { u8(d.level ? 1 : 0); },
                   [&](const Analog& a) {
                     if (a.raw > kAnalogMax) fail(Errc::InvalidField, "analog value above 1023");
                     u16(a.raw);
                   },
                   [&](const Scalar& s) { u32(static_cast<std::uint32_t>(s.milli)); },
                   [&](const Text& t) {
                     if (t.text.size() > kMaxWireText) fail(Errc::InvalidField, "text longer than 62 bytes");
                     if (!std::all_of(t.text.begin(), t.text.end(), is_text_byte)) {
                       fail(Errc::InvalidField, "text contains non-printable bytes");
                     }
                     for (char c : t.text) out_.push_back(static_cast<std::uint8_t>(c));
                   },
               },
               value);
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> rest() {
    auto r = data_.subspan(pos_);
    pos_ = data_.size();
    return r;
  }

  ChannelValue value() {
    const auto kind = u8();
    switch (static_cast<ValueKind>(kind)) {
      case ValueKind::Digital: {
        const auto level = u8();
        if (level > 1) fail(Errc::MalformedPayload, "digital level must be 0 or 1");
        return Digital{level == 1};
      }
      case ValueKind::Analog: {
        const auto raw = u16();
        if (raw > kAnalogMax) fail(Errc::MalformedPayload, "analog value above 1023");
        return Analog{raw};
      }
      case ValueKind::Scalar:
        return Scalar{static_cast<std::int32_t>(u32())};
      case ValueKind::Text: {
        const auto bytes = rest();
        std::string text(bytes.begin(), bytes.end());
        if (!std::all_of(text.begin(), text.end(), is_text_byte)) {
          fail(Errc::MalformedPayload, "text contains non-printable bytes");
        }
        return Text{std::move(text)};
      }
    }
    fail(Errc::MalformedPayload, "unknown value kind " + std::to_string(kind));
  }

  void finish() const {
    if (pos_ != data_.size()) fail(Errc::MalformedPayload, "trailing payload bytes");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(Errc::MalformedPayload, "payload too short");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_defined_opcode(std::uint8_t raw) noexcept {
  switch (static_cast<Opcode>(raw)) {
    case Opcode::Ping:
    case Opcode::Hello:
    case Opcode::Attach:
    case Opcode::Detach:
    case Opcode::Read:
    case Opcode::Write:
    case Opcode::Subscribe:
    case Opcode::Unsubscribe:
    case Opcode::AckPing:
    case Opcode::AckHello:
    case Opcode::AckAttach:
    case Opcode::AckDetach:
    case Opcode::Value:
    case Opcode::AckWrite:
    case Opcode::AckSubscribe:
    case Opcode::AckUnsubscribe:
    case Opcode::Event:
    case Opcode::Error:
      return true;
  }
  return false;
}

std::uint8_t crc8(std::span<const std::uint8_t> data) noexcept {
  std::uint8_t crc = 0x00;
  for (auto byte : data) crc = kCrcTable[crc ^ byte];
  return crc;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload) {
    fail(Errc::PayloadTooLong, std::to_string(frame.payload.size()) + " bytes");
  }
  std::vector<std::uint8_t> out;
  out.reserve(frame.payload.size() + 5);
  out.push_back(kSof);
  out.push_back(static_cast<std::uint8_t>(2 + frame.payload.size()));
  out.push_back(frame.seq);
  out.push_back(frame.opcode);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  out.push_back(crc8(std::span(out).subspan(1)));
  return out;
}

// --- decoder -----------------------------------------------------------------

std::vector<DecodeOutcome> FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  std::vector<DecodeOutcome> out;
  feed(bytes, out);
  return out;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes, std::vector<DecodeOutcome>& out) {
  for (auto byte : bytes) push(byte, out);
}

std::size_t FrameDecoder::candidate_end(std::size_t start) const noexcept {
  if (start + 1 >= size_) return kMaxFrameBytes + 1;  // LEN not seen yet
  const auto len = buf_[start + 1];
  if (!valid_len(len)) return 0;
  return start + std::size_t{len} + 3;
}

bool FrameDecoder::live(std::size_t start) const noexcept {
  return buf_[start] == kSof && candidate_end(start) > size_;
}

void FrameDecoder::push(std::uint8_t byte, std::vector<DecodeOutcome>& out) {
  if (size_ == 0 && byte != kSof) {
    ++garbage_;
    return;
  }
  buf_[size_] = byte;
  flags_[size_] = 0;
  ++size_;

  for (std::size_t start = 0; start + 1 < size_; ++start) {
    if (buf_[start] == kSof && candidate_end(start) == size_) resolve(start, out);
  }
  trim();
}

void FrameDecoder::resolve(std::size_t start, std::vector<DecodeOutcome>& out) {
  const std::size_t total = size_ - start;
  const auto body = std::span<const std::uint8_t>(buf_.data() + start + 1, total - 2);
  if (crc8(body) == buf_[size_ - 1]) {
    Frame frame;
    frame.seq = buf_[start + 2];
    frame.opcode = buf_[start + 3];
    frame.payload.assign(buf_.begin() + static_cast<std::ptrdiff_t>(start + 4),
                         buf_.begin() + static_cast<std::ptrdiff_t>(size_ - 1));
    emit(std::move(frame), start, out);
    for (std::size_t i = start; i < size_; ++i) flags_[i] = kClaimed | kAccounted;
    return;
  }
  // Only a candidate that is the oldest pending one and shares no bytes with a
  // decoded frame is worth reporting; the rest are misaligned SOFs.
  for (std::size_t i = 0; i < start; ++i) {
    if (live(i)) return;
  }
  for (std::size_t i = start; i < size_; ++i) {
    if (flags_[i] & kClaimed) return;
  }
  emit(BadCrc{}, start, out);
  flags_[start] |= kAccounted;
}

void FrameDecoder::emit(DecodeOutcome outcome, std::size_t start, std::vector<DecodeOutcome>& out) {
  // Bytes still covered by a pending candidate are judged when it resolves.
  std::size_t settled = 0;
  while (settled < start && !live(settled)) ++settled;
  for (std::size_t i = 0; i < settled; ++i) {
    if (!(flags_[i] & kAccounted)) {
      ++garbage_;
      flags_[i] |= kAccounted;
    }
  }
  if (garbage_ > 0) {
    out.emplace_back(Resync{garbage_});
    garbage_ = 0;
  }
  out.push_back(std::move(outcome));
}

void FrameDecoder::trim() {
  std::size_t keep = 0;
  while (keep < size_ && !live(keep)) ++keep;
  for (std::size_t i = 0; i < keep; ++i) {
    if (!(flags_[i] & kAccounted)) ++garbage_;
  }
  if (keep == 0) return;
  std::memmove(buf_.data(), buf_.data() + keep, size_ - keep);
  std::memmove(flags_.data(), flags_.data() + keep, size_ - keep);
  size_ -= keep;
}

// --- commands ----------------------------------------------------------------

Opcode opcode_of(const Command& command) noexcept {
  return std::visit(overloaded{
                        [](const cmd::Ping&) { return Opcode::Ping; },
                        [](const cmd::Hello&) { return Opcode::Hello; },
                        [](const cmd::Attach&) { return Opcode::Attach; },
                        [](const cmd::Detach&) { return Opcode::Detach; },
                        [](const cmd::Read&) { return Opcode::Read; },
                        [](const cmd::Write&) { return Opcode::Write; },
                        [](const cmd::Subscribe&) { return Opcode::Subscribe; },
                        [](const cmd::Unsubscribe&) { return Opcode::Unsubscribe; },
                        [](const cmd::AckPing&) { return Opcode::AckPing; },
                        [](const cmd::AckHello&) { return Opcode::AckHello; },
                        [](const cmd::AckAttach&) { return Opcode::AckAttach; },
                        [](const cmd::AckDetach&) { return Opcode::AckDetach; },
                        [](const cmd::Value&) { return Opcode::Value; },
                        [](const cmd::AckWrite&) { return Opcode::AckWrite; },
                        [](const cmd::AckSubscribe&) { return Opcode::AckSubscribe; },
                        [](const cmd::AckUnsubscribe&) { return Opcode::AckUnsubscribe; },
                        [](const cmd::Event&) { return Opcode::Event; },
                        [](const cmd::Error&) { return Opcode::Error; },
                    },
                    command);
}

std::size_t encoded_value_size(const ChannelValue& value) noexcept {
  return 1 + std::visit(overloaded{
                            [](const Digital&) -> std::size_t { return 1; },
                            [](const Analog&) -> std::size_t { return 2; },
                            [](const Scalar&) -> std::size_t { return 4; },
                            [](const Text& t) -> std::size_t { return t.text.size(); },
                        },
                        value);
}

Frame encode_command(std::uint8_t seq, const Command& command) {
  Frame frame;
  frame.seq = seq;
  frame.opcode = static_cast<std::uint8_t>(opcode_of(command));
  Writer w;
  std::visit(overloaded{
                 [](const cmd::Ping&) {},
                 [](const cmd::AckPing&) {},
                 [&](const cmd::Hello& c) { w.u8(c.protocol_version); },
                 [&](const cmd::AckHello& c) {
                   w.u8(c.info.protocol_version);
                   w.u16(c.info.firmware_version);
                   w.u32(c.info.capabilities);
                 },
                 [&](const cmd::Attach& c) {
                   if (c.pins.size() > kMaxPayload - 2) fail(Errc::InvalidField, "too many pins");
                   w.u8(c.module_type);
                   w.u8(static_cast<std::uint8_t>(c.pins.size()));
                   w.bytes(c.pins);
                 },
                 [&](const cmd::Detach& c) { w.u8(c.channel); },
                 [&](const cmd::AckAttach& c) { w.u8(c.channel); },
                 [&](const cmd::AckDetach& c) { w.u8(c.channel); },
                 [&](const cmd::Read& c) { w.u8(c.channel); },
                 [&](const cmd::Write& c) {
                   w.u8(c.channel);
                   w.value(c.value);
                 },
                 [&](const cmd::Value& c) {
                   w.u8(c.channel);
                   w.value(c.value);
                 },
                 [&](const cmd::AckWrite& c) { w.u8(c.channel); },
                 [&](const cmd::Subscribe& c) {
                   w.u8(c.channel);
                   w.u16(c.period_ms);
                 },
                 [&](const cmd::AckSubscribe& c) { w.u8(c.subscription); },
                 [&](const cmd::Unsubscribe& c) { w.u8(c.subscription); },
                 [&](const cmd::AckUnsubscribe& c) { w.u8(c.subscription); },
                 [&](const cmd::Event& c) {
                   frame.seq = c.subscription;
                   w.value(c.value);
                 },
                 [&](const cmd::Error& c) {
                   w.u8(c.code);
                   w.u8(c.offending_opcode);
                 },
             },
             command);
  frame.payload = w.take();
  return frame;
}

Command decode_command(const Frame& frame) {
  if (!is_defined_opcode(frame.opcode)) {
    fail(Errc::UnknownOpcode, "opcode " + std::to_string(frame.opcode));
  }
  Reader r(frame.payload);
  Command command;
  switch (static_cast<Opcode>(frame.opcode)) {
    case Opcode::Ping: command = cmd::Ping{}; break;
    case Opcode::AckPing: command = cmd::AckPing{}; break;
    case Opcode::Hello: command = cmd::Hello{r.u8()}; break;
    case Opcode::AckHello: {
      DeviceInfo info;
      info.protocol_version = r.u8();
      info.firmware_version = r.u16();
      info.capabilities = r.u32();
      command = cmd::AckHello{info};
      break;
    }
    case Opcode::Attach: {
      cmd::Attach c;
      c.module_type = r.u8();
      const auto count = r.u8();
      const auto pins = r.rest();
      if (pins.size() != count) fail(Errc::MalformedPayload, "pin count does not match payload");
      c.pins.assign(pins.begin(), pins.end());
      command = std::move(c);
      break;
    }
    case Opcode::Detach: command = cmd::Detach{r.u8()}; break;
    case Opcode::AckAttach: command = cmd::AckAttach{r.u8()}; break;
    case Opcode::AckDetach: command = cmd::AckDetach{r.u8()}; break;
    case Opcode::Read: command = cmd::Read{r.u8()}; break;
    case Opcode::Write: {
      const auto channel = r.u8();
      command = cmd::Write{channel, r.value()};
      break;
    }
    case Opcode::Value: {
      const auto channel = r.u8();
      command = cmd::Value{channel, r.value()};
      break;
    }
    case Opcode::AckWrite: command = cmd::AckWrite{r.u8()}; break;
    case Opcode::Subscribe: {
      const auto channel = r.u8();
      command = cmd::Subscribe{channel, r.u16()};
      break;
    }
    case Opcode::AckSubscribe: command = cmd::AckSubscribe{r.u8()}; break;
    case Opcode::Unsubscribe: command = cmd::Unsubscribe{r.u8()}; break;
    case Opcode::AckUnsubscribe: command = cmd::AckUnsubscribe{r.u8()}; break;
    case Opcode::Event: command = cmd::Event{frame.seq, r.value()}; break;
    case Opcode::Error: {
      const auto code = r.u8();
      command = cmd::Error{code, r.u8()};
      break;
    }
  }
  r.finish();
  return command;
}

Frame build_handshake_request(std::uint8_t seq) {
  return encode_command(seq, cmd::Hello{kProtocolVersion});
}

DeviceInfo parse_handshake_reply(const Frame& frame) {
  if (frame.opcode != static_cast<std::uint8_t>(Opcode::AckHello)) {
    fail(Errc::MalformedPayload, "expected ACK_HELLO");
  }
  if (!frame.payload.empty() && frame.payload[0] != kProtocolVersion) {
    fail(Errc::VersionMismatch, "device speaks protocol " + std::to_string(frame.payload[0]));
  }
  return std::get<cmd::AckHello>(decode_command(frame)).info;
}

}  // namespace ctrlink::protocol
