#include "ctrlink/session.hpp"

#include <array>

#include "ctrlink/error.hpp"

namespace ctrlink {

namespace pc = protocol::cmd;
using protocol::Opcode;

namespace {

constexpr auto kReaderPoll = std::chrono::milliseconds(20);

std::uint8_t reply_opcode_for(Opcode request) { return static_cast<std::uint8_t>(request) | protocol::kReplyBit; }

template <class T>
const T& expect(const protocol::Command& reply) {
  const auto* typed = std::get_if<T>(&reply);
  if (typed == nullptr) fail(Errc::MalformedPayload, "unexpected reply type");
  return *typed;
}

}  // namespace

std::string_view to_string(SessionState state) noexcept {
  switch (state) {
    case SessionState::Disconnected: return "Disconnected";
    case SessionState::HelloSent: return "HelloSent";
    case SessionState::Ready: return "Ready";
    case SessionState::Closed: return "Closed";
    case SessionState::Failed: return "Failed";
  }
  return "Unknown";
}

Session::Session(std::unique_ptr<Transport> transport, SessionConfig config)
    : transport_(std::move(transport)), config_(config) {
  if (!transport_) fail(Errc::Precondition, "session needs a transport");
  if (config_.retries == 0) config_.retries = 1;
  if (config_.event_queue_capacity == 0) config_.event_queue_capacity = 1;
}

Session::~Session() { close(); }

SessionState Session::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::string Session::failure_reason() const {
  std::lock_guard lock(mutex_);
  return failure_;
}

void Session::connect() {
  {
    std::lock_guard lock(mutex_);
    if (state_ != SessionState::Disconnected) fail(Errc::Precondition, "connect() called twice");
    state_ = SessionState::HelloSent;
  }
  reader_ = std::jthread([this](std::stop_token stop) { reader_loop(stop); });

  try {
    const auto reply = request(pc::Hello{protocol::kProtocolVersion}, Errc::HandshakeTimeout);
    const auto info = expect<pc::AckHello>(reply).info;
    if (info.protocol_version != protocol::kProtocolVersion) {
      fail(Errc::VersionMismatch, "device speaks protocol " + std::to_string(info.protocol_version));
    }
    std::lock_guard lock(mutex_);
    info_ = info;
    state_ = SessionState::Ready;
  } catch (const Error& e) {
    std::lock_guard lock(mutex_);
    if (state_ == SessionState::HelloSent) {
      state_ = SessionState::Failed;
      failure_ = e.what();
    }
    throw;
  }
}

void Session::require_ready() const {
  std::lock_guard lock(mutex_);
  if (state_ == SessionState::Closed) fail(Errc::SessionClosed);
  if (state_ != SessionState::Ready) fail(Errc::NotReady, std::string(to_string(state_)));
}

protocol::Command Session::request(const protocol::Command& command, Errc timeout_code) {
  const auto op = protocol::opcode_of(command);
  std::unique_lock lock(mutex_);
  if (link_error_) fail(Errc::TransportError, *link_error_);

  const auto seq = next_seq_++;
  const auto bytes = protocol::encode_frame(protocol::encode_command(seq, command));
  pending_seq_ = seq;
  pending_reply_opcode_ = reply_opcode_for(op);
  reply_.reset();

  for (unsigned attempt = 0; attempt < config_.retries && !reply_; ++attempt) {
    lock.unlock();
    try {
      transport_->write(bytes);
    } catch (const Error& e) {
      lock.lock();
      pending_seq_.reset();
      throw;
    }
    lock.lock();
    reply_cv_.wait_for(lock, config_.reply_timeout, [&] { return reply_.has_value() || link_error_.has_value(); });
    if (!reply_ && link_error_) {
      pending_seq_.reset();
      fail(Errc::TransportError, *link_error_);
    }
  }
  pending_seq_.reset();
  if (!reply_) {
    fail(timeout_code, std::to_string(config_.retries) + " attempts of " +
                           std::to_string(config_.reply_timeout.count()) + " ms");
  }
  const auto frame = std::move(*reply_);
  reply_.reset();
  lock.unlock();

  auto reply = protocol::decode_command(frame);
  if (const auto* err = std::get_if<pc::Error>(&reply)) {
    const auto code = static_cast<DeviceErrc>(err->code);
    throw Error(Errc::DeviceError, code, "DeviceError: " + std::string(to_string(code)));
  }
  return reply;
}

void Session::reader_loop(std::stop_token stop) {
  protocol::FrameDecoder decoder;
  std::array<std::uint8_t, 256> buf{};
  std::vector<protocol::DecodeOutcome> outcomes;
  try {
    while (!stop.stop_requested()) {
      const auto n = transport_->read_some(buf, kReaderPoll);
      if (n == 0) continue;
      outcomes.clear();
      decoder.feed(std::span(buf.data(), n), outcomes);
      for (const auto& outcome : outcomes) {
        if (const auto* frame = std::get_if<protocol::Frame>(&outcome)) on_frame(*frame);
      }
    }
  } catch (const Error& e) {
    std::lock_guard lock(mutex_);
    link_error_ = e.what();
  }
  reply_cv_.notify_all();
}

void Session::on_frame(const protocol::Frame& frame) {
  if (frame.opcode == static_cast<std::uint8_t>(Opcode::Event)) {
    try {
      const auto event = std::get<pc::Event>(protocol::decode_command(frame));
      on_event(event.subscription, event.value);
    } catch (const Error&) {
      // Undecodable event: dropped.
    }
    return;
  }

  std::lock_guard lock(mutex_);
  const bool matches = pending_seq_ && frame.seq == *pending_seq_ && !reply_ &&
                       (frame.opcode == pending_reply_opcode_ ||
                        frame.opcode == static_cast<std::uint8_t>(Opcode::Error));
  if (!matches) return;  // stale or unsolicited reply
  reply_ = frame;
  if (frame.opcode == reply_opcode_for(Opcode::Subscribe) && pending_subscribe_) {
    // Register before any later frame is processed so no event for the new id
    // can slip past.
    try {
      const auto ack = std::get<pc::AckSubscribe>(protocol::decode_command(frame));
      auto sub = std::move(*pending_subscribe_);
      sub.info.id = ack.subscription;
      subs_[ack.subscription] = std::move(sub);
    } catch (const Error&) {
    }
    pending_subscribe_.reset();
  }
  reply_cv_.notify_all();
}

void Session::on_event(std::uint8_t subscription, const ChannelValue& wire_value) {
  std::unique_lock lock(mutex_);
  const auto it = subs_.find(subscription);
  if (it == subs_.end()) return;
  SessionEvent event;
  event.subscription = subscription;
  event.channel = it->second.info.channel;
  try {
    event.value = from_wire(event.channel, wire_value);
  } catch (const Error&) {
    return;
  }
  event.index = ++it->second.delivered;

  if (it->second.sink) {
    auto sink = it->second.sink;
    lock.unlock();
    sink(event);
    return;
  }
  if (queue_.size() >= config_.event_queue_capacity) {
    queue_.pop_front();
    ++dropped_;
  }
  queue_.push_back(std::move(event));
}

ChannelValue Session::from_wire(std::uint8_t channel, const ChannelValue& wire_value) const {
  const auto it = channels_.find(channel);
  if (it == channels_.end()) return wire_value;
  return convert_raw(it->second, raw_from_wire(it->second, wire_value));
}

std::chrono::duration<double, std::milli> Session::ping() {
  require_ready();
  const auto start = std::chrono::steady_clock::now();
  expect<pc::AckPing>(request(pc::Ping{}));
  return std::chrono::steady_clock::now() - start;
}

std::uint8_t Session::attach(std::uint8_t module_type, const std::vector<std::uint8_t>& pins) {
  require_ready();
  if (is_known_module_id(module_type)) {
    const auto desc = descriptor_of(module_type);
    if (pins.size() != desc.pin_count) {
      fail(Errc::Precondition, module_name(module_type) + " needs " + std::to_string(desc.pin_count) + " pin(s)");
    }
  }
  const auto channel = expect<pc::AckAttach>(request(pc::Attach{module_type, pins})).channel;
  std::lock_guard lock(mutex_);
  channels_[channel] = module_type;
  return channel;
}

void Session::detach(std::uint8_t channel) {
  require_ready();
  expect<pc::AckDetach>(request(pc::Detach{channel}));
  std::lock_guard lock(mutex_);
  channels_.erase(channel);
  std::erase_if(subs_, [&](const auto& entry) { return entry.second.info.channel == channel; });
}

void Session::adopt_channel(std::uint8_t channel, std::uint8_t module_type) {
  descriptor_of(module_type);  // validates the id
  std::lock_guard lock(mutex_);
  channels_[channel] = module_type;
}

std::optional<std::uint8_t> Session::module_of(std::uint8_t channel) const {
  std::lock_guard lock(mutex_);
  const auto it = channels_.find(channel);
  if (it == channels_.end()) return std::nullopt;
  return it->second;
}

ChannelValue Session::read(std::uint8_t channel) {
  require_ready();
  const auto module = module_of(channel);
  if (module && descriptor_of(*module).direction != Direction::Sensor) {
    fail(Errc::WrongDirection, "channel " + std::to_string(channel) + " is an actuator");
  }
  const auto value = expect<pc::Value>(request(pc::Read{channel}));
  if (value.channel != channel) fail(Errc::MalformedPayload, "VALUE for another channel");
  std::lock_guard lock(mutex_);
  return from_wire(channel, value.value);
}

void Session::write(std::uint8_t channel, const ChannelValue& value) {
  require_ready();
  if (const auto module = module_of(channel)) {
    if (descriptor_of(*module).direction != Direction::Actuator) {
      fail(Errc::WrongDirection, "channel " + std::to_string(channel) + " is a sensor");
    }
    validate_write(*module, value);
  }
  expect<pc::AckWrite>(request(pc::Write{channel, value}));
}

Subscription Session::subscribe(std::uint8_t channel, std::uint16_t period_ms, EventSink sink) {
  require_ready();
  if (period_ms < 10 || period_ms > 60000) {
    fail(Errc::OutOfRange, "period " + std::to_string(period_ms) + " ms outside 10..60000");
  }
  if (const auto module = module_of(channel); module && descriptor_of(*module).direction != Direction::Sensor) {
    fail(Errc::WrongDirection, "channel " + std::to_string(channel) + " is an actuator");
  }
  {
    std::lock_guard lock(mutex_);
    pending_subscribe_ = SubState{Subscription{0, channel, period_ms}, std::move(sink), 0};
  }
  try {
    const auto ack = expect<pc::AckSubscribe>(request(pc::Subscribe{channel, period_ms}));
    std::lock_guard lock(mutex_);
    return subs_.at(ack.subscription).info;
  } catch (...) {
    std::lock_guard lock(mutex_);
    pending_subscribe_.reset();
    throw;
  }
}

void Session::unsubscribe(const Subscription& subscription) {
  require_ready();
  expect<pc::AckUnsubscribe>(request(pc::Unsubscribe{subscription.id}));
  std::lock_guard lock(mutex_);
  subs_.erase(subscription.id);
}

std::vector<SessionEvent> Session::poll_events(std::size_t max) {
  std::lock_guard lock(mutex_);
  if (state_ == SessionState::Closed) fail(Errc::SessionClosed);
  std::vector<SessionEvent> out;
  while (out.size() < max && !queue_.empty()) {
    out.push_back(std::move(queue_.front()));
    queue_.pop_front();
  }
  return out;
}

std::size_t Session::dropped_events() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

void Session::close() {
  {
    std::lock_guard lock(mutex_);
    if (state_ == SessionState::Closed) return;
    state_ = SessionState::Closed;
    link_error_ = "session closed";
  }
  reply_cv_.notify_all();
  reader_.request_stop();
  transport_->close();
  if (reader_.joinable()) reader_.join();
}

std::unique_ptr<Session> open_session(std::unique_ptr<Transport> transport, SessionConfig config) {
  auto session = std::make_unique<Session>(std::move(transport), config);
  session->connect();
  return session;
}

}  // namespace ctrlink
