/**
 * @file transport.hpp
 * @brief Duplex byte streams the protocol runs over.
 *
 * Endpoint syntax (shared by the library and the CLI):
 *
 *   serial:<path>?baud=115200
 *   tcp:<host>:<port>
 *   loopback:
 */

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>

namespace ctrlink {

class Transport {
 public:
  virtual ~Transport() = default;

  /// Waits up to `timeout` for at least one byte. Returns 0 on timeout.
  /// Throws Error(TransportError) once the link is closed or broken.
  virtual std::size_t read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) = 0;

  /// Writes all bytes or throws Error(TransportError).
  virtual void write(std::span<const std::uint8_t> bytes) = 0;

  /// Idempotent. Unblocks pending reads.
  virtual void close() noexcept = 0;
};

// ---------------------------------------------------------------------------
// Loopback
// ---------------------------------------------------------------------------

/// Two connected in-memory ends. Destroying one end leaves the other open but
/// mute; close() on either end brings the whole link down.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_loopback_pair();

// ---------------------------------------------------------------------------
// TCP
// ---------------------------------------------------------------------------

class TcpTransport final : public Transport {
 public:
  /// Takes ownership of a connected socket.
  explicit TcpTransport(int fd) noexcept : fd_(fd) {}
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  static std::unique_ptr<TcpTransport> connect(const std::string& host, std::uint16_t port,
                                               std::chrono::milliseconds timeout);

  std::size_t read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override;
  void write(std::span<const std::uint8_t> bytes) override;
  void close() noexcept override;

 private:
  int fd_;
  std::atomic<bool> closed_{false};
};

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Returns nullptr on timeout.
  std::unique_ptr<Transport> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// ---------------------------------------------------------------------------
// Serial
// ---------------------------------------------------------------------------

class SerialTransport final : public Transport {
 public:
  ~SerialTransport() override;

  SerialTransport(const SerialTransport&) = delete;
  SerialTransport& operator=(const SerialTransport&) = delete;

  /// Opens a tty in raw 8N1 mode. Throws Error(TransportError) or
  /// Error(ConfigError) for an unsupported baud rate.
  static std::unique_ptr<SerialTransport> open(const std::string& path, std::uint32_t baud);

  std::size_t read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override;
  void write(std::span<const std::uint8_t> bytes) override;
  void close() noexcept override;

 private:
  explicit SerialTransport(int fd) noexcept : fd_(fd) {}
  int fd_;
  std::atomic<bool> closed_{false};
};

// ---------------------------------------------------------------------------
// Endpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDefaultBaud = 115200;

struct SerialEndpoint {
  std::string path;
  std::uint32_t baud = kDefaultBaud;
  friend bool operator==(const SerialEndpoint&, const SerialEndpoint&) = default;
};

struct TcpEndpoint {
  std::string host;
  std::uint16_t port = 0;
  friend bool operator==(const TcpEndpoint&, const TcpEndpoint&) = default;
};

struct LoopbackEndpoint {
  friend bool operator==(const LoopbackEndpoint&, const LoopbackEndpoint&) = default;
};

using Endpoint = std::variant<SerialEndpoint, TcpEndpoint, LoopbackEndpoint>;

/// Throws Error(ConfigError) on malformed syntax.
Endpoint parse_endpoint(const std::string& text);
std::string to_string(const Endpoint& endpoint);

/// Opens the client side of an endpoint. `loopback:` yields an end whose peer
/// nobody services, which is only useful for exercising timeouts.
std::unique_ptr<Transport> open_endpoint(const Endpoint& endpoint, std::chrono::milliseconds connect_timeout);

}  // namespace ctrlink
