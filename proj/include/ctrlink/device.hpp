/**
 * @file device.hpp
 * @brief Virtual controller board running the template firmware loop:
 *        receive bytes → decode frames → dispatch one routine per opcode → reply.
 *
 * Time is virtual. Nothing advances unless tick() is called, which makes
 * subscription output a pure function of the inbound bytes and tick schedule.
 */

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ctrlink/catalog.hpp"
#include "ctrlink/error.hpp"
#include "ctrlink/protocol.hpp"

namespace ctrlink::sim {

// ---------------------------------------------------------------------------
// Sensor signals
// ---------------------------------------------------------------------------

struct Constant {
  std::uint16_t raw = 0;
  friend bool operator==(const Constant&, const Constant&) = default;
};

/// raw(t) = round_half_even((min+max)/2 + (max-min)/2 · sin(2πt/period))
struct Sine {
  std::uint16_t min = 0;
  std::uint16_t max = 0;
  std::uint32_t period_ms = 1000;
  friend bool operator==(const Sine&, const Sine&) = default;
};

/// Cycles through `values`, holding each for `dwell_ms`.
struct Step {
  std::vector<std::uint16_t> values;
  std::uint32_t dwell_ms = 1000;
  friend bool operator==(const Step&, const Step&) = default;
};

struct TraceSample {
  std::uint64_t t_ms = 0;
  std::uint16_t raw = 0;
  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

/// Piecewise-constant playback: the value at t is the last sample with
/// t_ms <= t (the first sample before that). Holds the final sample after the
/// end unless `loop` is set, in which case the trace repeats with the final
/// sample lasting as long as the gap before it.
struct Trace {
  std::vector<TraceSample> samples;
  bool loop = false;
  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Value set from outside with Device::set_manual().
struct Manual {
  std::uint16_t raw = 0;
  friend bool operator==(const Manual&, const Manual&) = default;
};

using SignalSource = std::variant<Constant, Sine, Step, Trace, Manual>;

/// Evaluates a source `elapsed_ms` after it was installed. Not clamped.
std::uint16_t sample_signal(const SignalSource& source, std::uint64_t elapsed_ms);

/// Throws Error(ConfigError) for degenerate sources (empty step list, zero
/// period, unsorted trace, min > max).
void validate_signal(const SignalSource& source);

// ---------------------------------------------------------------------------
// Actuators
// ---------------------------------------------------------------------------

struct Led {
  bool on = false;
  friend bool operator==(const Led&, const Led&) = default;
};
struct Servo {
  std::int32_t milli_deg = 0;
  friend bool operator==(const Servo&, const Servo&) = default;
};
struct Motor {
  std::int32_t milli_pwm = 0;
  friend bool operator==(const Motor&, const Motor&) = default;
};
struct Lcd {
  std::vector<std::string> lines;
  friend bool operator==(const Lcd&, const Lcd&) = default;
};
struct SevenSeg {
  char digit = ' ';
  friend bool operator==(const SevenSeg&, const SevenSeg&) = default;
};
struct Buzzer {
  bool on = false;
  friend bool operator==(const Buzzer&, const Buzzer&) = default;
};
struct IrLed {
  bool on = false;
  friend bool operator==(const IrLed&, const IrLed&) = default;
};

using ActuatorState = std::variant<Led, Servo, Motor, Lcd, SevenSeg, Buzzer, IrLed>;

std::string describe(const ActuatorState& state);

// ---------------------------------------------------------------------------
// Device
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxSubscriptions = 16;
inline constexpr std::size_t kMaxChannels = 64;
inline constexpr std::uint16_t kMinPeriodMs = 10;
inline constexpr std::uint16_t kMaxPeriodMs = 60000;

struct ChannelSpec {
  std::uint8_t module_type = 0;
  std::vector<std::uint8_t> pins;
  std::optional<SignalSource> signal;  ///< sensors only; defaults to Constant{0}
};

struct DeviceConfig {
  std::uint8_t protocol_version = protocol::kProtocolVersion;
  std::uint16_t firmware_version = 0x0100;
  std::uint32_t capabilities = kAllCatalogCapabilities;
  /// Attached at construction, in order, so they get channels 0, 1, ...
  std::vector<ChannelSpec> channels;
  /// When non-zero every inbound PING first advances the clock by this much,
  /// so a host's keepalive traffic drives virtual time.
  std::uint32_t ping_step_ms = 0;
};

/// Parses the JSON simulator config (see docs/simulator.md).
/// Throws Error(ConfigError).
DeviceConfig parse_device_config(const std::string& json_text);
DeviceConfig load_device_config(const std::string& path);
SignalSource parse_signal_json(const std::string& json_text);

struct SubscriptionEntry {
  std::uint8_t id = 0;
  std::uint8_t channel = 0;
  std::uint16_t period_ms = 0;
  std::uint64_t next_due_ms = 0;
};

class Device {
 public:
  explicit Device(DeviceConfig config = {});

  /// Feeds inbound bytes and returns the bytes the firmware would transmit.
  std::vector<std::uint8_t> run_step(std::span<const std::uint8_t> inbound);

  /// Advances the virtual clock, emitting EVENT frames for every subscription
  /// that falls due, in due-time order with ties broken by subscription id.
  std::vector<std::uint8_t> tick(std::uint32_t advance_ms);

  /// Throws Error(BadChannel) or Error(WrongDirection).
  void set_signal(std::uint8_t channel, SignalSource source);
  /// Sets the value of a Manual source (installing one if needed).
  void set_manual(std::uint8_t channel, std::uint16_t raw);

  std::map<std::uint8_t, ActuatorState> actuator_snapshot() const;

  /// Raw sample a READ issued now would return, clamped to the sensor's domain.
  std::uint16_t sample(std::uint8_t channel) const;

  /// Local attach, same rules as the ATTACH routine. Returns the channel or the
  /// error code the device would have sent.
  std::variant<std::uint8_t, DeviceErrc> attach(std::uint8_t module_type, std::span<const std::uint8_t> pins);

  std::uint64_t clock_ms() const noexcept { return clock_ms_; }
  const protocol::DeviceInfo& info() const noexcept { return info_; }
  std::vector<SubscriptionEntry> subscriptions() const;
  std::optional<std::uint8_t> module_of(std::uint8_t channel) const;
  const std::map<std::uint8_t, std::uint8_t>& pin_table() const noexcept { return pins_; }

  /// Forgets per-connection state: subscriptions, the retransmit cache and any
  /// partially received frame. Called when a host disconnects or says HELLO.
  void reset_link() noexcept;

  /// Checks the pin/channel/subscription table invariants.
  bool tables_consistent() const;

 private:
  struct Channel {
    std::uint8_t module_type = 0;
    std::vector<std::uint8_t> pins;
    SignalSource signal = Constant{};
    std::uint64_t signal_origin_ms = 0;
    ActuatorState actuator = Led{};
  };

  protocol::Command dispatch(const protocol::Frame& frame);
  protocol::Command on_attach(const protocol::cmd::Attach& c);
  protocol::Command on_detach(const protocol::cmd::Detach& c);
  protocol::Command on_read(const protocol::cmd::Read& c);
  protocol::Command on_write(const protocol::cmd::Write& c);
  protocol::Command on_subscribe(const protocol::cmd::Subscribe& c);
  protocol::Command on_unsubscribe(const protocol::cmd::Unsubscribe& c);

  const Channel& sensor_channel(std::uint8_t channel) const;
  Channel& sensor_channel(std::uint8_t channel);
  std::uint16_t sample_channel(const Channel& ch) const;

  protocol::DeviceInfo info_;
  std::uint32_t ping_step_ms_ = 0;
  protocol::FrameDecoder decoder_;
  // Last executed request and its encoded reply. A byte-identical retransmit
  // (same seq) gets the cached reply instead of running the routine twice.
  std::optional<protocol::Frame> last_request_;
  std::vector<std::uint8_t> last_reply_;
  std::map<std::uint8_t, Channel> channels_;
  std::map<std::uint8_t, std::uint8_t> pins_;  // pin → channel
  std::vector<SubscriptionEntry> subs_;
  std::uint16_t next_channel_ = 0;
  std::uint64_t clock_ms_ = 0;
};

}  // namespace ctrlink::sim
