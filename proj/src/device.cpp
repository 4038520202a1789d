#include "ctrlink/device.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

namespace ctrlink::sim {

namespace pc = protocol::cmd;
using protocol::Command;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

pc::Error device_error(DeviceErrc code, std::uint8_t opcode) {
  return pc::Error{static_cast<std::uint8_t>(code), opcode};
}

ActuatorState initial_actuator(ModuleType type) {
  switch (type) {
    case ModuleType::Lcd16x2: return Lcd{std::vector<std::string>(2)};
    case ModuleType::Lcd16x4: return Lcd{std::vector<std::string>(4)};
    case ModuleType::ServoSg90: return Servo{};
    case ModuleType::DcMotor: return Motor{};
    case ModuleType::SevenSegment: return SevenSeg{};
    case ModuleType::BuzzerYl44: return Buzzer{};
    case ModuleType::IrLed: return IrLed{};
    default: return Led{};
  }
}

ActuatorState apply_write(const ActuatorState& current, const ChannelValue& value) {
  return std::visit(overloaded{
                        [&](const Led&) -> ActuatorState { return Led{std::get<Digital>(value).level}; },
                        [&](const Buzzer&) -> ActuatorState { return Buzzer{std::get<Digital>(value).level}; },
                        [&](const IrLed&) -> ActuatorState { return IrLed{std::get<Digital>(value).level}; },
                        [&](const Servo&) -> ActuatorState { return Servo{std::get<Scalar>(value).milli}; },
                        [&](const Motor&) -> ActuatorState { return Motor{std::get<Scalar>(value).milli}; },
                        [&](const SevenSeg&) -> ActuatorState { return SevenSeg{std::get<Text>(value).text[0]}; },
                        [&](const Lcd& lcd) -> ActuatorState {
                          Lcd next{std::vector<std::string>(lcd.lines.size())};
                          const auto& text = std::get<Text>(value).text;
                          std::size_t row = 0;
                          for (char c : text) {
                            if (c == '\n') {
                              ++row;
                            } else {
                              next.lines[row] += c;
                            }
                          }
                          return next;
                        },
                    },
                    current);
}

bool is_request(std::uint8_t opcode) noexcept {
  return opcode >= static_cast<std::uint8_t>(protocol::Opcode::Ping) &&
         opcode <= static_cast<std::uint8_t>(protocol::Opcode::Unsubscribe);
}

}  // namespace

// ---------------------------------------------------------------------------
// Signals
// ---------------------------------------------------------------------------

std::uint16_t sample_signal(const SignalSource& source, std::uint64_t elapsed_ms) {
  return std::visit(
      overloaded{
          [](const Constant& c) { return c.raw; },
          [](const Manual& m) { return m.raw; },
          [&](const Sine& s) {
            const double mid = (static_cast<double>(s.min) + static_cast<double>(s.max)) / 2.0;
            const double amp = (static_cast<double>(s.max) - static_cast<double>(s.min)) / 2.0;
            const auto phase = static_cast<double>(elapsed_ms % s.period_ms) / s.period_ms;
            const double v = mid + amp * std::sin(2.0 * std::numbers::pi * phase);
            // nearbyint follows the default rounding mode: half to even.
            return static_cast<std::uint16_t>(std::clamp(std::nearbyint(v), 0.0, 65535.0));
          },
          [&](const Step& s) {
            const auto index = (elapsed_ms / s.dwell_ms) % s.values.size();
            return s.values[index];
          },
          [&](const Trace& t) {
            const auto& samples = t.samples;
            auto at = elapsed_ms;
            if (t.loop && samples.size() > 0) {
              const auto& last = samples.back();
              const std::uint64_t tail = samples.size() > 1 ? last.t_ms - samples[samples.size() - 2].t_ms : 1;
              const auto span = last.t_ms + std::max<std::uint64_t>(tail, 1);
              at %= span;
            }
            auto it = std::upper_bound(samples.begin(), samples.end(), at,
                                       [](std::uint64_t v, const TraceSample& s) { return v < s.t_ms; });
            if (it == samples.begin()) return samples.front().raw;
            return std::prev(it)->raw;
          },
      },
      source);
}

void validate_signal(const SignalSource& source) {
  std::visit(overloaded{
                 [](const Constant&) {},
                 [](const Manual&) {},
                 [](const Sine& s) {
                   if (s.period_ms == 0) fail(Errc::ConfigError, "sine period must be positive");
                   if (s.min > s.max) fail(Errc::ConfigError, "sine min above max");
                 },
                 [](const Step& s) {
                   if (s.values.empty()) fail(Errc::ConfigError, "step needs at least one value");
                   if (s.dwell_ms == 0) fail(Errc::ConfigError, "step dwell must be positive");
                 },
                 [](const Trace& t) {
                   if (t.samples.empty()) fail(Errc::ConfigError, "trace needs at least one sample");
                   for (std::size_t i = 1; i < t.samples.size(); ++i) {
                     if (t.samples[i].t_ms < t.samples[i - 1].t_ms) {
                       fail(Errc::ConfigError, "trace samples must be ordered by time");
                     }
                   }
                 },
             },
             source);
}

std::string describe(const ActuatorState& state) {
  return std::visit(overloaded{
                        [](const Led& s) { return std::string("led ") + (s.on ? "on" : "off"); },
                        [](const Buzzer& s) { return std::string("buzzer ") + (s.on ? "on" : "off"); },
                        [](const IrLed& s) { return std::string("ir_led ") + (s.on ? "on" : "off"); },
                        [](const Servo& s) { return "servo " + std::to_string(s.milli_deg) + " mdeg"; },
                        [](const Motor& s) { return "motor " + std::to_string(s.milli_pwm) + " mpwm"; },
                        [](const SevenSeg& s) { return std::string("seven_segment '") + s.digit + "'"; },
                        [](const Lcd& s) {
                          std::string out = "lcd";
                          for (const auto& line : s.lines) out += " |" + line + "|";
                          return out;
                        },
                    },
                    state);
}

// ---------------------------------------------------------------------------
// Device
// ---------------------------------------------------------------------------

Device::Device(DeviceConfig config) {
  info_.protocol_version = config.protocol_version;
  info_.firmware_version = config.firmware_version;
  info_.capabilities = config.capabilities;
  ping_step_ms_ = config.ping_step_ms;
  for (auto& spec : config.channels) {
    const auto result = attach(spec.module_type, spec.pins);
    if (const auto* err = std::get_if<DeviceErrc>(&result)) {
      fail(Errc::ConfigError, "cannot attach " + module_name(spec.module_type) + ": " + std::string(to_string(*err)));
    }
    if (spec.signal) set_signal(std::get<std::uint8_t>(result), std::move(*spec.signal));
  }
}

std::vector<std::uint8_t> Device::run_step(std::span<const std::uint8_t> inbound) {
  std::vector<std::uint8_t> out;
  for (auto& outcome : decoder_.feed(inbound)) {
    const auto* frame = std::get_if<protocol::Frame>(&outcome);
    if (frame == nullptr) continue;  // BadCrc and Resync are silent

    if (last_request_ && *last_request_ == *frame) {
      out.insert(out.end(), last_reply_.begin(), last_reply_.end());
      continue;
    }
    if (ping_step_ms_ > 0 && frame->opcode == static_cast<std::uint8_t>(protocol::Opcode::Ping)) {
      const auto events = tick(ping_step_ms_);
      out.insert(out.end(), events.begin(), events.end());
    }
    auto reply = protocol::encode_frame(protocol::encode_command(frame->seq, dispatch(*frame)));
    out.insert(out.end(), reply.begin(), reply.end());
    if (frame->opcode == static_cast<std::uint8_t>(protocol::Opcode::Hello)) {
      last_request_.reset();
    } else {
      last_request_ = *frame;
      last_reply_ = std::move(reply);
    }
  }
  return out;
}

void Device::reset_link() noexcept {
  subs_.clear();
  decoder_.reset();
  last_request_.reset();
  last_reply_.clear();
}

Command Device::dispatch(const protocol::Frame& frame) {
  Command request;
  try {
    request = protocol::decode_command(frame);
  } catch (const Error& e) {
    const auto code = e.code() == Errc::UnknownOpcode ? DeviceErrc::UnknownOpcode : DeviceErrc::MalformedPayload;
    return device_error(code, frame.opcode);
  }
  if (!is_request(frame.opcode)) return device_error(DeviceErrc::UnknownOpcode, frame.opcode);

  return std::visit(overloaded{
                        [&](const pc::Hello&) -> Command {
                          subs_.clear();
                          return pc::AckHello{info_};
                        },
                        [&](const pc::Ping&) -> Command { return pc::AckPing{}; },
                        [&](const pc::Attach& c) { return on_attach(c); },
                        [&](const pc::Detach& c) { return on_detach(c); },
                        [&](const pc::Read& c) { return on_read(c); },
                        [&](const pc::Write& c) { return on_write(c); },
                        [&](const pc::Subscribe& c) { return on_subscribe(c); },
                        [&](const pc::Unsubscribe& c) { return on_unsubscribe(c); },
                        [&](const auto&) -> Command { return device_error(DeviceErrc::UnknownOpcode, frame.opcode); },
                    },
                    request);
}

std::variant<std::uint8_t, DeviceErrc> Device::attach(std::uint8_t module_type, std::span<const std::uint8_t> pins) {
  if (!is_known_module_id(module_type)) return DeviceErrc::UnknownModuleType;
  if (module_type < 32 && !info_.supports(module_type)) return DeviceErrc::UnknownModuleType;
  const auto desc = descriptor_of(module_type);
  if (pins.size() != desc.pin_count) return DeviceErrc::BadPins;
  std::set<std::uint8_t> requested(pins.begin(), pins.end());
  if (requested.size() != pins.size()) return DeviceErrc::PinConflict;
  for (auto pin : pins) {
    if (pins_.contains(pin)) return DeviceErrc::PinConflict;
  }
  if (next_channel_ >= kMaxChannels) return DeviceErrc::TableFull;

  const auto id = static_cast<std::uint8_t>(next_channel_++);
  Channel ch;
  ch.module_type = module_type;
  ch.pins.assign(pins.begin(), pins.end());
  ch.signal_origin_ms = clock_ms_;
  if (desc.direction == Direction::Actuator) ch.actuator = initial_actuator(desc.type);
  for (auto pin : pins) pins_[pin] = id;
  channels_.emplace(id, std::move(ch));
  return id;
}

Command Device::on_attach(const pc::Attach& c) {
  const auto result = attach(c.module_type, c.pins);
  if (const auto* err = std::get_if<DeviceErrc>(&result)) {
    return device_error(*err, static_cast<std::uint8_t>(protocol::Opcode::Attach));
  }
  return pc::AckAttach{std::get<std::uint8_t>(result)};
}

Command Device::on_detach(const pc::Detach& c) {
  const auto it = channels_.find(c.channel);
  if (it == channels_.end()) {
    return device_error(DeviceErrc::BadChannel, static_cast<std::uint8_t>(protocol::Opcode::Detach));
  }
  for (auto pin : it->second.pins) pins_.erase(pin);
  std::erase_if(subs_, [&](const SubscriptionEntry& s) { return s.channel == c.channel; });
  channels_.erase(it);
  return pc::AckDetach{c.channel};
}

Command Device::on_read(const pc::Read& c) {
  constexpr auto op = static_cast<std::uint8_t>(protocol::Opcode::Read);
  const auto it = channels_.find(c.channel);
  if (it == channels_.end()) return device_error(DeviceErrc::BadChannel, op);
  if (descriptor_of(it->second.module_type).direction != Direction::Sensor) {
    return device_error(DeviceErrc::WrongDirection, op);
  }
  return pc::Value{c.channel, raw_to_wire(it->second.module_type, sample_channel(it->second))};
}

Command Device::on_write(const pc::Write& c) {
  constexpr auto op = static_cast<std::uint8_t>(protocol::Opcode::Write);
  const auto it = channels_.find(c.channel);
  if (it == channels_.end()) return device_error(DeviceErrc::BadChannel, op);
  if (descriptor_of(it->second.module_type).direction != Direction::Actuator) {
    return device_error(DeviceErrc::WrongDirection, op);
  }
  try {
    validate_write(it->second.module_type, c.value);
  } catch (const Error&) {
    return device_error(DeviceErrc::BadValue, op);
  }
  it->second.actuator = apply_write(it->second.actuator, c.value);
  return pc::AckWrite{c.channel};
}

Command Device::on_subscribe(const pc::Subscribe& c) {
  constexpr auto op = static_cast<std::uint8_t>(protocol::Opcode::Subscribe);
  const auto it = channels_.find(c.channel);
  if (it == channels_.end()) return device_error(DeviceErrc::BadChannel, op);
  if (descriptor_of(it->second.module_type).direction != Direction::Sensor) {
    return device_error(DeviceErrc::WrongDirection, op);
  }
  if (c.period_ms < kMinPeriodMs || c.period_ms > kMaxPeriodMs) return device_error(DeviceErrc::BadValue, op);
  if (subs_.size() >= kMaxSubscriptions) return device_error(DeviceErrc::TableFull, op);

  std::uint8_t id = 0;
  while (std::any_of(subs_.begin(), subs_.end(), [&](const SubscriptionEntry& s) { return s.id == id; })) ++id;
  subs_.push_back({id, c.channel, c.period_ms, clock_ms_ + c.period_ms});
  return pc::AckSubscribe{id};
}

Command Device::on_unsubscribe(const pc::Unsubscribe& c) {
  const auto removed =
      std::erase_if(subs_, [&](const SubscriptionEntry& s) { return s.id == c.subscription; });
  if (removed == 0) {
    return device_error(DeviceErrc::BadSubscription, static_cast<std::uint8_t>(protocol::Opcode::Unsubscribe));
  }
  return pc::AckUnsubscribe{c.subscription};
}

std::vector<std::uint8_t> Device::tick(std::uint32_t advance_ms) {
  std::vector<std::uint8_t> out;
  const auto end = clock_ms_ + advance_ms;
  for (;;) {
    auto next = subs_.end();
    for (auto it = subs_.begin(); it != subs_.end(); ++it) {
      if (it->next_due_ms > end) continue;
      if (next == subs_.end() || it->next_due_ms < next->next_due_ms ||
          (it->next_due_ms == next->next_due_ms && it->id < next->id)) {
        next = it;
      }
    }
    if (next == subs_.end()) break;

    clock_ms_ = next->next_due_ms;
    next->next_due_ms += next->period_ms;
    const auto& ch = channels_.at(next->channel);
    const pc::Event event{next->id, raw_to_wire(ch.module_type, sample_channel(ch))};
    const auto bytes = protocol::encode_frame(protocol::encode_command(next->id, event));
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  clock_ms_ = end;
  return out;
}

const Device::Channel& Device::sensor_channel(std::uint8_t channel) const {
  const auto it = channels_.find(channel);
  if (it == channels_.end()) fail(Errc::BadChannel, "channel " + std::to_string(channel));
  if (descriptor_of(it->second.module_type).direction != Direction::Sensor) {
    fail(Errc::WrongDirection, "channel " + std::to_string(channel) + " is an actuator");
  }
  return it->second;
}

Device::Channel& Device::sensor_channel(std::uint8_t channel) {
  return const_cast<Channel&>(std::as_const(*this).sensor_channel(channel));
}

void Device::set_signal(std::uint8_t channel, SignalSource source) {
  auto& ch = sensor_channel(channel);
  validate_signal(source);
  ch.signal = std::move(source);
  ch.signal_origin_ms = clock_ms_;
}

void Device::set_manual(std::uint8_t channel, std::uint16_t raw) {
  auto& ch = sensor_channel(channel);
  if (auto* manual = std::get_if<Manual>(&ch.signal)) {
    manual->raw = raw;
  } else {
    ch.signal = Manual{raw};
    ch.signal_origin_ms = clock_ms_;
  }
}

std::uint16_t Device::sample_channel(const Channel& ch) const {
  const auto raw = sample_signal(ch.signal, clock_ms_ - ch.signal_origin_ms);
  return std::min(raw, descriptor_of(ch.module_type).raw_max);
}

std::uint16_t Device::sample(std::uint8_t channel) const {
  return sample_channel(sensor_channel(channel));
}

std::map<std::uint8_t, ActuatorState> Device::actuator_snapshot() const {
  std::map<std::uint8_t, ActuatorState> out;
  for (const auto& [id, ch] : channels_) {
    if (descriptor_of(ch.module_type).direction == Direction::Actuator) out.emplace(id, ch.actuator);
  }
  return out;
}

std::vector<SubscriptionEntry> Device::subscriptions() const { return subs_; }

std::optional<std::uint8_t> Device::module_of(std::uint8_t channel) const {
  const auto it = channels_.find(channel);
  if (it == channels_.end()) return std::nullopt;
  return it->second.module_type;
}

bool Device::tables_consistent() const {
  for (const auto& [pin, channel] : pins_) {
    const auto it = channels_.find(channel);
    if (it == channels_.end()) return false;
    if (std::find(it->second.pins.begin(), it->second.pins.end(), pin) == it->second.pins.end()) return false;
  }
  std::size_t pin_total = 0;
  for (const auto& [id, ch] : channels_) {
    if (id >= next_channel_) return false;
    for (auto pin : ch.pins) {
      const auto it = pins_.find(pin);
      if (it == pins_.end() || it->second != id) return false;
    }
    pin_total += ch.pins.size();
  }
  if (pin_total != pins_.size()) return false;

  if (subs_.size() > kMaxSubscriptions) return false;
  std::set<std::uint8_t> ids;
  for (const auto& s : subs_) {
    if (!ids.insert(s.id).second || s.id >= kMaxSubscriptions) return false;
    const auto it = channels_.find(s.channel);
    if (it == channels_.end() || descriptor_of(it->second.module_type).direction != Direction::Sensor) return false;
  }
  return true;
}

}  // namespace ctrlink::sim
