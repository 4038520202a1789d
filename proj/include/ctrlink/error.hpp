/**
 * @file error.hpp
 * @brief Error codes and the exception type shared by every ctrlink module.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctrlink {

enum class Errc {
  // protocol
  PayloadTooLong,
  InvalidField,
  UnknownOpcode,
  MalformedPayload,
  VersionMismatch,
  // module catalog
  UnknownModuleType,
  NotASensor,
  NotAnActuator,
  AnalogOutOfRange,
  WrongKind,
  OutOfRange,
  // host session
  HandshakeTimeout,
  Timeout,
  TransportError,
  DeviceError,
  WrongDirection,
  SessionClosed,
  NotReady,
  Precondition,
  // device simulator
  BadChannel,
  // trigger engine
  SyntaxError,
  DuplicateRuleId,
  BadPredicate,
  TimeRegression,
  // files / endpoints
  ParseError,
  ConfigError,
};

std::string_view to_string(Errc code) noexcept;

/// Error codes carried on the wire inside ERROR frames.
enum class DeviceErrc : std::uint8_t {
  UnknownOpcode = 0x01,
  MalformedPayload = 0x02,
  UnknownModuleType = 0x03,
  PinConflict = 0x04,
  BadChannel = 0x05,
  BadValue = 0x06,
  TableFull = 0x07,
  WrongDirection = 0x08,
  BadPins = 0x09,
  BadSubscription = 0x0A,
};

std::string_view to_string(DeviceErrc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Error(Errc code, DeviceErrc device_code, const std::string& what)
      : std::runtime_error(what), code_(code), device_code_(device_code) {}

  Errc code() const noexcept { return code_; }

  /// Set only when code() == Errc::DeviceError.
  std::optional<DeviceErrc> device_code() const noexcept { return device_code_; }

 private:
  Errc code_;
  std::optional<DeviceErrc> device_code_;
};

[[noreturn]] void fail(Errc code, const std::string& detail = {});

}  // namespace ctrlink
