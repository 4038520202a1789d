#include "ctrlink/error.hpp"

namespace ctrlink {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::PayloadTooLong: return "PayloadTooLong";
    case Errc::InvalidField: return "InvalidField";
    case Errc::UnknownOpcode: return "UnknownOpcode";
    case Errc::MalformedPayload: return "MalformedPayload";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::UnknownModuleType: return "UnknownModuleType";
    case Errc::NotASensor: return "NotASensor";
    case Errc::NotAnActuator: return "NotAnActuator";
    case Errc::AnalogOutOfRange: return "AnalogOutOfRange";
    case Errc::WrongKind: return "WrongKind";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::HandshakeTimeout: return "HandshakeTimeout";
    case Errc::Timeout: return "Timeout";
    case Errc::TransportError: return "TransportError";
    case Errc::DeviceError: return "DeviceError";
    case Errc::WrongDirection: return "WrongDirection";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::NotReady: return "NotReady";
    case Errc::Precondition: return "Precondition";
    case Errc::BadChannel: return "BadChannel";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::DuplicateRuleId: return "DuplicateRuleId";
    case Errc::BadPredicate: return "BadPredicate";
    case Errc::TimeRegression: return "TimeRegression";
    case Errc::ParseError: return "ParseError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string_view to_string(DeviceErrc code) noexcept {
  switch (code) {
    case DeviceErrc::UnknownOpcode: return "UnknownOpcode";
    case DeviceErrc::MalformedPayload: return "MalformedPayload";
    case DeviceErrc::UnknownModuleType: return "UnknownModuleType";
    case DeviceErrc::PinConflict: return "PinConflict";
    case DeviceErrc::BadChannel: return "BadChannel";
    case DeviceErrc::BadValue: return "BadValue";
    case DeviceErrc::TableFull: return "TableFull";
    case DeviceErrc::WrongDirection: return "WrongDirection";
    case DeviceErrc::BadPins: return "BadPins";
    case DeviceErrc::BadSubscription: return "BadSubscription";
  }
  return "Unknown";
}

void fail(Errc code, const std::string& detail) {
  std::string what(to_string(code));
  if (!detail.empty()) {
    what += ": ";
    what += detail;
  }
  throw Error(code, what);
}

}  // namespace ctrlink
