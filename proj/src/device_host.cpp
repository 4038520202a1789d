#include "ctrlink/device_host.hpp"

#include <array>

#include "ctrlink/error.hpp"

namespace ctrlink::sim {

void DeviceHost::serve(Transport& transport, const HostOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto poll = std::chrono::milliseconds(options.clock == ClockMode::WallClock ? options.step_ms : 20);
  {
    std::lock_guard lock(mutex_);
    active_ = &transport;
    device_.reset_link();
  }

  std::array<std::uint8_t, 256> buf{};
  auto last_tick = clock::now();
  try {
    while (!stopping_) {
      const auto n = transport.read_some(buf, poll);
      std::lock_guard lock(mutex_);
      if (n > 0) {
        const auto out = device_.run_step(std::span(buf.data(), n));
        if (!out.empty()) transport.write(out);
      }
      if (options.clock == ClockMode::WallClock) {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - last_tick);
        const auto steps = static_cast<std::uint32_t>(elapsed.count()) / options.step_ms;
        if (steps > 0) {
          last_tick += std::chrono::milliseconds(std::uint64_t{steps} * options.step_ms);
          const auto events = device_.tick(steps * options.step_ms);
          if (!events.empty()) transport.write(events);
        }
      }
    }
  } catch (const Error& e) {
    if (e.code() != Errc::TransportError) throw;
  }

  std::lock_guard lock(mutex_);
  active_ = nullptr;
  device_.reset_link();
}

void DeviceHost::start(std::unique_ptr<Transport> transport, HostOptions options) {
  stop();
  stopping_ = false;
  owned_ = std::move(transport);
  thread_ = std::thread([this, options] { serve(*owned_, options); });
}

void DeviceHost::stop() {
  stopping_ = true;
  if (thread_.joinable()) thread_.join();
  owned_.reset();
}

void DeviceHost::tick(std::uint32_t advance_ms) {
  std::lock_guard lock(mutex_);
  transmit(device_.tick(advance_ms));
}

void DeviceHost::transmit(const std::vector<std::uint8_t>& bytes) {
  if (active_ == nullptr || bytes.empty()) return;
  try {
    active_->write(bytes);
  } catch (const Error&) {
    // Peer went away; serve() notices on its next read.
  }
}

}  // namespace ctrlink::sim
