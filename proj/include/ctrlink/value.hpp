/**
 * @file value.hpp
 * @brief Typed sample/command values exchanged with a channel.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace ctrlink {

enum class ValueKind : std::uint8_t { Digital = 0x00, Analog = 0x01, Scalar = 0x02, Text = 0x03 };

inline constexpr std::uint16_t kAnalogMax = 1023;
inline constexpr std::size_t kTextMax = 64;

struct Digital {
  bool level = false;
  friend bool operator==(const Digital&, const Digital&) = default;
};

/// Raw ADC count, 0..=1023.
struct Analog {
  std::uint16_t raw = 0;
  friend bool operator==(const Analog&, const Analog&) = default;
};

/// Milli-units of the owning module's unit.
struct Scalar {
  std::int32_t milli = 0;
  friend bool operator==(const Scalar&, const Scalar&) = default;
};

struct Text {
  std::string text;
  friend bool operator==(const Text&, const Text&) = default;
};

using ChannelValue = std::variant<Digital, Analog, Scalar, Text>;

ValueKind kind_of(const ChannelValue& value) noexcept;
std::string_view to_string(ValueKind kind) noexcept;

/// Printable ASCII plus line feed (LCD line break).
bool is_text_byte(char c) noexcept;

/// Comparison domain used by trigger rules: Digital → 0/1000, Analog → raw·1000,
/// Scalar as-is. Text has no numeric value.
std::optional<std::int64_t> milli_value(const ChannelValue& value) noexcept;

/// Human-readable `kind:value`, e.g. `analog:512`.
std::string format_value(const ChannelValue& value);

/// Inverse of format_value. Throws Error(ParseError) on bad input.
ChannelValue parse_value(std::string_view text);

}  // namespace ctrlink
