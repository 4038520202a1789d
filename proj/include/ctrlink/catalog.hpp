/**
 * @file catalog.hpp
 * @brief Sensor/actuator module types, their static metadata, raw-value
 *        conversion and write validation.
 */

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "ctrlink/value.hpp"

namespace ctrlink {

enum class ModuleType : std::uint8_t {
  PushButton = 0x00,
  Lcd16x2 = 0x01,
  Lcd16x4 = 0x02,
  Lm35 = 0x03,
  HcSr04 = 0x04,
  Ldr = 0x05,
  ServoSg90 = 0x06,
  DcMotor = 0x07,
  IrLed = 0x08,
  IrReceiverTsop382 = 0x09,
  GasMqX = 0x0A,
  SevenSegment = 0x0B,
  Potentiometer = 0x0C,
  Led5mm = 0x0D,
  Microphone = 0x0E,
  VibrationSw420 = 0x0F,
  BuzzerYl44 = 0x10,
};

inline constexpr std::size_t kCatalogSize = 17;
inline constexpr std::uint8_t kExtensionFirst = 0x40;
inline constexpr std::uint8_t kExtensionLast = 0x7F;

/// Capability mask with every built-in module type set (ids 0..16).
inline constexpr std::uint32_t kAllCatalogCapabilities = (1U << kCatalogSize) - 1U;

enum class Direction : std::uint8_t { Sensor, Actuator };

struct ModuleDescriptor {
  ModuleType type;
  std::string_view name;  ///< CLI / config spelling, e.g. "lm35"
  Direction direction;
  ValueKind value_kind;
  std::uint8_t pin_count;
  std::string_view unit;
  /// Largest raw sample the device can report for a sensor.
  std::uint16_t raw_max;
};

std::span<const ModuleDescriptor, kCatalogSize> catalog() noexcept;

constexpr bool is_extension_id(std::uint8_t id) noexcept {
  return id >= kExtensionFirst && id <= kExtensionLast;
}

/// Built-in ids resolve to their catalog entry. Ids in the user extension range
/// resolve to a generic single-pin sensor reporting Scalar(raw). Anything else
/// throws Error(UnknownModuleType).
ModuleDescriptor descriptor_of(std::uint8_t id);
inline ModuleDescriptor descriptor_of(ModuleType type) { return descriptor_of(static_cast<std::uint8_t>(type)); }

bool is_known_module_id(std::uint8_t id) noexcept;

/// Accepts a catalog name ("servo_sg90") or a numeric id ("6", "0x06").
std::optional<std::uint8_t> module_id_from_name(std::string_view name) noexcept;
std::string module_name(std::uint8_t id);

/// Raw device sample → engineering value.
///   Lm35: m°C = raw·500000/1023, HcSr04: mm = raw·10/58 (both truncating),
///   ADC sensors pass Analog(raw) through, digital sensors give Digital(raw != 0),
///   extension ids give Scalar(raw).
/// Throws NotASensor, AnalogOutOfRange (raw above the sensor's raw_max).
ChannelValue convert_raw(std::uint8_t id, std::uint16_t raw);
inline ChannelValue convert_raw(ModuleType type, std::uint16_t raw) {
  return convert_raw(static_cast<std::uint8_t>(type), raw);
}

/// How a device reports a raw sample on the wire: Digital for digital sensors,
/// Scalar(raw) for echo-time and extension sensors, Analog(raw) otherwise.
ChannelValue raw_to_wire(std::uint8_t id, std::uint16_t raw);

/// Inverse of raw_to_wire. Throws MalformedPayload when the kind does not match.
std::uint16_t raw_from_wire(std::uint8_t id, const ChannelValue& value);

/// Smallest raw sample that converts to `value`, if any.
std::optional<std::uint16_t> raw_for_value(std::uint8_t id, const ChannelValue& value);

/// Throws NotAnActuator, WrongKind or OutOfRange.
void validate_write(std::uint8_t id, const ChannelValue& value);
inline void validate_write(ModuleType type, const ChannelValue& value) {
  validate_write(static_cast<std::uint8_t>(type), value);
}

}  // namespace ctrlink
