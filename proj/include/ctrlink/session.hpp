/**
 * @file session.hpp
 * @brief Host side of the link: handshake, stop-and-wait requests with
 *        timeout/retry, and subscription event delivery.
 *
 * One request is in flight at a time. Each request carries the next value of a
 * wrapping 8-bit sequence counter; a retransmission reuses it, and only a reply
 * with the same seq (or an ERROR with that seq) completes the request. EVENT
 * frames are unsolicited and never satisfy a pending request.
 *
 * A background reader thread owns the receive side. Event sinks run on that
 * thread and must not issue requests on the same session.
 */

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ctrlink/catalog.hpp"
#include "ctrlink/error.hpp"
#include "ctrlink/protocol.hpp"
#include "ctrlink/transport.hpp"

namespace ctrlink {

struct SessionConfig {
  std::chrono::milliseconds reply_timeout{250};
  /// Total transmissions per request (the first attempt included).
  unsigned retries = 3;
  std::size_t event_queue_capacity = 1024;
};

enum class SessionState { Disconnected, HelloSent, Ready, Closed, Failed };

std::string_view to_string(SessionState state) noexcept;

struct SessionEvent {
  std::uint8_t subscription = 0;
  std::uint8_t channel = 0;
  /// 1 for the first event of a subscription, 2 for the next, ...
  std::uint64_t index = 0;
  ChannelValue value;

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

using EventSink = std::function<void(const SessionEvent&)>;

struct Subscription {
  std::uint8_t id = 0;
  std::uint8_t channel = 0;
  std::uint16_t period_ms = 0;
};

class Session {
 public:
  Session(std::unique_ptr<Transport> transport, SessionConfig config = {});
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Sends HELLO and waits for ACK_HELLO. Throws HandshakeTimeout,
  /// VersionMismatch or TransportError; the session is then Failed.
  void connect();

  SessionState state() const;
  std::string failure_reason() const;
  const protocol::DeviceInfo& device_info() const { return info_; }

  /// Round trip of a PING.
  std::chrono::duration<double, std::milli> ping();

  /// Returns the device-assigned channel. The pin list must match the module's
  /// pin count (checked locally).
  std::uint8_t attach(std::uint8_t module_type, const std::vector<std::uint8_t>& pins);
  std::uint8_t attach(ModuleType type, const std::vector<std::uint8_t>& pins) {
    return attach(static_cast<std::uint8_t>(type), pins);
  }
  void detach(std::uint8_t channel);

  /// Declares the module behind a channel this session did not attach itself
  /// (e.g. one pre-attached by the device). Enables local direction checks,
  /// validation and conversion for it.
  void adopt_channel(std::uint8_t channel, std::uint8_t module_type);
  std::optional<std::uint8_t> module_of(std::uint8_t channel) const;

  /// Converted value for known channels; the raw wire value otherwise.
  ChannelValue read(std::uint8_t channel);
  void write(std::uint8_t channel, const ChannelValue& value);

  /// Events go to `sink` when given, to the poll queue otherwise.
  Subscription subscribe(std::uint8_t channel, std::uint16_t period_ms, EventSink sink = {});
  void unsubscribe(const Subscription& subscription);

  /// Non-blocking; FIFO.
  std::vector<SessionEvent> poll_events(std::size_t max);
  /// Events discarded because the queue was full.
  std::size_t dropped_events() const;

  /// Sends nothing; releases the transport.
  void close();

 private:
  struct SubState {
    Subscription info;
    EventSink sink;
    std::uint64_t delivered = 0;
  };

  protocol::Command request(const protocol::Command& command, Errc timeout_code = Errc::Timeout);
  void require_ready() const;
  void reader_loop(std::stop_token stop);
  void on_frame(const protocol::Frame& frame);
  void on_event(std::uint8_t subscription, const ChannelValue& wire_value);
  ChannelValue from_wire(std::uint8_t channel, const ChannelValue& wire_value) const;

  std::unique_ptr<Transport> transport_;
  SessionConfig config_;
  protocol::DeviceInfo info_;
  std::jthread reader_;

  mutable std::mutex mutex_;
  std::condition_variable reply_cv_;
  SessionState state_ = SessionState::Disconnected;
  std::string failure_;
  std::uint8_t next_seq_ = 0;
  std::optional<std::uint8_t> pending_seq_;
  std::uint8_t pending_reply_opcode_ = 0;
  std::optional<protocol::Frame> reply_;
  std::optional<SubState> pending_subscribe_;
  std::optional<std::string> link_error_;
  std::map<std::uint8_t, std::uint8_t> channels_;  // channel → module type
  std::map<std::uint8_t, SubState> subs_;
  std::deque<SessionEvent> queue_;
  std::size_t dropped_ = 0;
};

/// Constructs a session and performs the handshake.
std::unique_ptr<Session> open_session(std::unique_ptr<Transport> transport, SessionConfig config = {});

}  // namespace ctrlink
