#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "ctrlink/device.hpp"

namespace ctrlink::sim {

using nlohmann::json;

namespace {

template <class T>
T as_int(const json& v, const std::string& context) {
  static_assert(std::is_integral_v<T>);
  if (v.is_number_integer()) {
    if (v.is_number_unsigned()) {
      const auto n = v.get<std::uint64_t>();
      if (n <= static_cast<std::uint64_t>(std::numeric_limits<T>::max())) return static_cast<T>(n);
    } else {
      const auto n = v.get<std::int64_t>();
      if (n >= static_cast<std::int64_t>(std::numeric_limits<T>::min()) &&
          (n < 0 || static_cast<std::uint64_t>(n) <= static_cast<std::uint64_t>(std::numeric_limits<T>::max()))) {
        return static_cast<T>(n);
      }
    }
  }
  fail(Errc::ConfigError, "bad value for '" + context + "': " + v.dump());
}

template <class T>
std::vector<T> as_int_list(const json& v, const std::string& context) {
  if (!v.is_array()) fail(Errc::ConfigError, "'" + context + "' must be a list");
  std::vector<T> out;
  for (const auto& item : v) out.push_back(as_int<T>(item, context));
  return out;
}

std::uint8_t module_from_json(const json& j) {
  if (j.is_number_unsigned() && j.get<std::uint64_t>() <= 0xFF && is_known_module_id(j.get<std::uint8_t>())) {
    return j.get<std::uint8_t>();
  }
  if (j.is_string()) {
    if (auto id = module_id_from_name(j.get<std::string>())) return *id;
  }
  fail(Errc::ConfigError, "unknown module " + j.dump());
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(Errc::ConfigError, std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T int_field(const json& j, const char* key) {
  return as_int<T>(field(j, key), key);
}

std::string string_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) fail(Errc::ConfigError, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

SignalSource signal_from_json(const json& j) {
  if (!j.is_object()) fail(Errc::ConfigError, "signal must be an object");
  const auto type = string_field(j, "type");
  SignalSource source;
  if (type == "constant") {
    source = Constant{int_field<std::uint16_t>(j, "raw")};
  } else if (type == "manual") {
    source = Manual{j.contains("raw") ? int_field<std::uint16_t>(j, "raw") : std::uint16_t{0}};
  } else if (type == "sine") {
    source = Sine{int_field<std::uint16_t>(j, "min"), int_field<std::uint16_t>(j, "max"),
                  int_field<std::uint32_t>(j, "period_ms")};
  } else if (type == "step") {
    source = Step{as_int_list<std::uint16_t>(field(j, "values"), "values"), int_field<std::uint32_t>(j, "dwell_ms")};
  } else if (type == "trace") {
    Trace trace;
    const auto& samples = field(j, "samples");
    if (!samples.is_array()) fail(Errc::ConfigError, "'samples' must be a list");
    for (const auto& s : samples) {
      if (!s.is_array() || s.size() != 2) fail(Errc::ConfigError, "trace samples are [t_ms, raw] pairs");
      trace.samples.push_back({as_int<std::uint64_t>(s[0], "samples"), as_int<std::uint16_t>(s[1], "samples")});
    }
    if (j.contains("loop")) {
      if (!j.at("loop").is_boolean()) fail(Errc::ConfigError, "'loop' must be true or false");
      trace.loop = j.at("loop").get<bool>();
    }
    source = std::move(trace);
  } else {
    fail(Errc::ConfigError, "unknown signal type '" + type + "'");
  }
  validate_signal(source);
  return source;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::ConfigError, e.what());
  }
}

}  // namespace

SignalSource parse_signal_json(const std::string& json_text) { return signal_from_json(parse_json(json_text)); }

DeviceConfig parse_device_config(const std::string& json_text) {
  const auto root = parse_json(json_text);
  if (!root.is_object()) fail(Errc::ConfigError, "config must be a JSON object");

  DeviceConfig config;
  if (root.contains("protocol_version")) config.protocol_version = int_field<std::uint8_t>(root, "protocol_version");
  if (root.contains("firmware_version")) config.firmware_version = int_field<std::uint16_t>(root, "firmware_version");
  if (root.contains("capabilities")) {
    config.capabilities = 0;
    const auto& caps = field(root, "capabilities");
    if (!caps.is_array()) fail(Errc::ConfigError, "'capabilities' must be a list");
    for (const auto& m : caps) {
      const auto id = module_from_json(m);
      if (id >= 32) fail(Errc::ConfigError, "capability bits cover module ids 0-31 only");
      config.capabilities |= 1U << id;
    }
  }
  if (root.contains("channels")) {
    const auto& channels = field(root, "channels");
    if (!channels.is_array()) fail(Errc::ConfigError, "'channels' must be a list");
    for (const auto& c : channels) {
      ChannelSpec spec;
      spec.module_type = module_from_json(field(c, "module"));
      spec.pins = as_int_list<std::uint8_t>(field(c, "pins"), "pins");
      if (c.contains("signal")) {
        if (descriptor_of(spec.module_type).direction != Direction::Sensor) {
          fail(Errc::ConfigError, "signal given for actuator " + module_name(spec.module_type));
        }
        spec.signal = signal_from_json(c.at("signal"));
      }
      config.channels.push_back(std::move(spec));
    }
  }
  return config;
}

DeviceConfig load_device_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_device_config(text.str());
}

}  // namespace ctrlink::sim
