#include "ctrlink/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <string>

#include "ctrlink/error.hpp"
#include "ctrlink/protocol.hpp"

namespace ctrlink {

namespace {

using D = Direction;
using K = ValueKind;

constexpr std::uint16_t kAdcMax = kAnalogMax;
constexpr std::uint16_t kU16Max = 0xFFFF;

constexpr std::array<ModuleDescriptor, kCatalogSize> kCatalog{{
    {ModuleType::PushButton, "push_button", D::Sensor, K::Digital, 1, "", kAdcMax},
    {ModuleType::Lcd16x2, "lcd16x2", D::Actuator, K::Text, 6, "", 0},
    {ModuleType::Lcd16x4, "lcd16x4", D::Actuator, K::Text, 6, "", 0},
    {ModuleType::Lm35, "lm35", D::Sensor, K::Scalar, 1, "m°C", kAdcMax},
    {ModuleType::HcSr04, "hc_sr04", D::Sensor, K::Scalar, 2, "mm", kU16Max},
    {ModuleType::Ldr, "ldr", D::Sensor, K::Analog, 1, "adc", kAdcMax},
    {ModuleType::ServoSg90, "servo_sg90", D::Actuator, K::Scalar, 1, "deg", 0},
    {ModuleType::DcMotor, "dc_motor", D::Actuator, K::Scalar, 3, "pwm", 0},
    {ModuleType::IrLed, "ir_led", D::Actuator, K::Digital, 1, "", 0},
    {ModuleType::IrReceiverTsop382, "ir_receiver_tsop382", D::Sensor, K::Analog, 1, "adc", kAdcMax},
    {ModuleType::GasMqX, "gas_mqx", D::Sensor, K::Analog, 1, "adc", kAdcMax},
    {ModuleType::SevenSegment, "seven_segment", D::Actuator, K::Text, 7, "", 0},
    {ModuleType::Potentiometer, "potentiometer", D::Sensor, K::Analog, 1, "adc", kAdcMax},
    {ModuleType::Led5mm, "led5mm", D::Actuator, K::Digital, 1, "", 0},
    {ModuleType::Microphone, "microphone", D::Sensor, K::Analog, 1, "adc", kAdcMax},
    {ModuleType::VibrationSw420, "vibration_sw420", D::Sensor, K::Digital, 1, "", kAdcMax},
    {ModuleType::BuzzerYl44, "buzzer_yl44", D::Actuator, K::Digital, 1, "", 0},
}};

constexpr bool catalog_ids_dense() {
  for (std::size_t i = 0; i < kCatalog.size(); ++i) {
    if (static_cast<std::size_t>(kCatalog[i].type) != i) return false;
  }
  return true;
}
static_assert(catalog_ids_dense(), "catalog must be indexed by module id");

ModuleDescriptor extension_descriptor(std::uint8_t id) {
  return {static_cast<ModuleType>(id), "extension", D::Sensor, K::Scalar, 1, "raw", kU16Max};
}

std::string id_text(std::uint8_t id) { return "module id " + std::to_string(id); }

template <class T>
const T* as(const ChannelValue& v) {
  return std::get_if<T>(&v);
}

void check_lcd_text(const Text& t, std::size_t max_visible, std::size_t max_breaks) {
  const auto breaks = static_cast<std::size_t>(std::count(t.text.begin(), t.text.end(), '\n'));
  if (!std::all_of(t.text.begin(), t.text.end(), is_text_byte)) {
    fail(Errc::OutOfRange, "text contains non-printable bytes");
  }
  if (breaks > max_breaks) fail(Errc::OutOfRange, "too many line breaks");
  if (t.text.size() - breaks > max_visible) fail(Errc::OutOfRange, "text longer than the display");
  if (t.text.size() > protocol::kMaxWireText) fail(Errc::OutOfRange, "text does not fit in one frame");
}

}  // namespace

std::span<const ModuleDescriptor, kCatalogSize> catalog() noexcept { return kCatalog; }

bool is_known_module_id(std::uint8_t id) noexcept {
  return id < kCatalogSize || is_extension_id(id);
}

ModuleDescriptor descriptor_of(std::uint8_t id) {
  if (id < kCatalogSize) return kCatalog[id];
  if (is_extension_id(id)) return extension_descriptor(id);
  fail(Errc::UnknownModuleType, id_text(id));
}

std::optional<std::uint8_t> module_id_from_name(std::string_view name) noexcept {
  for (const auto& d : kCatalog) {
    if (d.name == name) return static_cast<std::uint8_t>(d.type);
  }
  int base = 10;
  if (name.size() > 2 && name[0] == '0' && (name[1] == 'x' || name[1] == 'X')) {
    name.remove_prefix(2);
    base = 16;
  }
  unsigned value = 0;
  const auto* end = name.data() + name.size();
  auto [ptr, ec] = std::from_chars(name.data(), end, value, base);
  if (name.empty() || ec != std::errc{} || ptr != end || value > 0xFF) return std::nullopt;
  if (!is_known_module_id(static_cast<std::uint8_t>(value))) return std::nullopt;
  return static_cast<std::uint8_t>(value);
}

std::string module_name(std::uint8_t id) {
  if (id < kCatalogSize) return std::string(kCatalog[id].name);
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", id);
  return buf;
}

ChannelValue convert_raw(std::uint8_t id, std::uint16_t raw) {
  const auto desc = descriptor_of(id);
  if (desc.direction != D::Sensor) fail(Errc::NotASensor, id_text(id));
  if (raw > desc.raw_max) fail(Errc::AnalogOutOfRange, std::to_string(raw));

  if (is_extension_id(id)) return Scalar{raw};
  switch (desc.type) {
    case ModuleType::Lm35:
      return Scalar{static_cast<std::int32_t>(std::int64_t{raw} * 500000 / 1023)};
    case ModuleType::HcSr04:
      return Scalar{static_cast<std::int32_t>(std::int64_t{raw} * 10 / 58)};
    default:
      break;
  }
  if (desc.value_kind == K::Digital) return Digital{raw != 0};
  return Analog{raw};
}

ChannelValue raw_to_wire(std::uint8_t id, std::uint16_t raw) {
  const auto desc = descriptor_of(id);
  if (desc.direction != D::Sensor) fail(Errc::NotASensor, id_text(id));
  if (desc.value_kind == K::Digital) return Digital{raw != 0};
  if (desc.raw_max > kAdcMax) return Scalar{raw};
  return Analog{raw};
}

std::uint16_t raw_from_wire(std::uint8_t id, const ChannelValue& value) {
  const auto desc = descriptor_of(id);
  if (desc.value_kind == K::Digital) {
    if (const auto* d = as<Digital>(value)) return d->level ? 1 : 0;
  } else if (desc.raw_max > kAdcMax) {
    if (const auto* s = as<Scalar>(value); s && s->milli >= 0 && s->milli <= kU16Max) {
      return static_cast<std::uint16_t>(s->milli);
    }
  } else if (const auto* a = as<Analog>(value)) {
    return a->raw;
  }
  fail(Errc::MalformedPayload, "unexpected " + format_value(value) + " for " + module_name(id));
}

std::optional<std::uint16_t> raw_for_value(std::uint8_t id, const ChannelValue& value) {
  const auto desc = descriptor_of(id);
  if (desc.direction != D::Sensor) return std::nullopt;
  // Every conversion is monotone non-decreasing in raw, so the smallest
  // preimage is found by bisection on the integer comparison domain.
  const auto target = milli_value(value);
  if (!target || kind_of(value) != kind_of(convert_raw(id, 0))) return std::nullopt;
  std::uint32_t lo = 0;
  std::uint32_t hi = std::uint32_t{desc.raw_max} + 1;
  while (lo < hi) {
    const auto mid = (lo + hi) / 2;
    if (*milli_value(convert_raw(id, static_cast<std::uint16_t>(mid))) < *target) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo > desc.raw_max) return std::nullopt;
  const auto raw = static_cast<std::uint16_t>(lo);
  if (convert_raw(id, raw) != value) return std::nullopt;
  return raw;
}

void validate_write(std::uint8_t id, const ChannelValue& value) {
  const auto desc = descriptor_of(id);
  if (desc.direction != D::Actuator) fail(Errc::NotAnActuator, id_text(id));
  if (kind_of(value) != desc.value_kind) {
    fail(Errc::WrongKind, std::string(desc.name) + " expects " + std::string(to_string(desc.value_kind)));
  }
  switch (desc.type) {
    case ModuleType::ServoSg90: {
      const auto milli = std::get<Scalar>(value).milli;
      if (milli < 0 || milli > 180000) fail(Errc::OutOfRange, "servo angle " + std::to_string(milli));
      return;
    }
    case ModuleType::DcMotor: {
      const auto milli = std::get<Scalar>(value).milli;
      if (milli < -255000 || milli > 255000) fail(Errc::OutOfRange, "motor pwm " + std::to_string(milli));
      return;
    }
    case ModuleType::Lcd16x2:
      check_lcd_text(std::get<Text>(value), 32, 1);
      return;
    case ModuleType::Lcd16x4:
      check_lcd_text(std::get<Text>(value), 64, 3);
      return;
    case ModuleType::SevenSegment: {
      const auto& text = std::get<Text>(value).text;
      if (text.size() != 1 || !std::isdigit(static_cast<unsigned char>(text[0]))) {
        fail(Errc::OutOfRange, "seven segment shows a single digit 0-9");
      }
      return;
    }
    default:
      return;  // digital actuators: any level
  }
}

}  // namespace ctrlink
