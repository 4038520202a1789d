/**
 * @file device_host.hpp
 * @brief Drives a simulated Device over a Transport.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>

#include "ctrlink/device.hpp"
#include "ctrlink/transport.hpp"

namespace ctrlink::sim {

enum class ClockMode {
  /// Virtual time only moves through DeviceHost::tick().
  Manual,
  /// The virtual clock follows the wall clock in `step_ms` increments.
  WallClock,
};

struct HostOptions {
  ClockMode clock = ClockMode::Manual;
  std::uint32_t step_ms = 10;
};

/// Owns a Device and serialises every access to it. One connection is served at
/// a time; the device (attached channels, actuator state, clock) outlives
/// connections, while subscriptions end with the connection that created them.
class DeviceHost {
 public:
  explicit DeviceHost(Device device) : device_(std::move(device)) {}
  ~DeviceHost() { stop(); }

  DeviceHost(const DeviceHost&) = delete;
  DeviceHost& operator=(const DeviceHost&) = delete;

  /// Blocks serving `transport` until the peer disconnects or stop() is called.
  void serve(Transport& transport, const HostOptions& options);

  /// serve() on a background thread; the host owns the transport.
  void start(std::unique_ptr<Transport> transport, HostOptions options = {});

  /// Ends the current serve() loop and joins the background thread.
  void stop();

  /// Re-arms after stop() so another connection can be served.
  void rearm() { stopping_ = false; }

  bool stopping() const noexcept { return stopping_; }

  /// Advances virtual time and transmits any events on the active connection.
  void tick(std::uint32_t advance_ms);

  template <class F>
  decltype(auto) with_device(F&& f) {
    std::lock_guard lock(mutex_);
    return std::forward<F>(f)(device_);
  }

 private:
  void transmit(const std::vector<std::uint8_t>& bytes);

  std::mutex mutex_;
  Device device_;
  Transport* active_ = nullptr;
  std::unique_ptr<Transport> owned_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
};

}  // namespace ctrlink::sim
