#include "ctrlink/value.hpp"

#include <charconv>

#include "ctrlink/error.hpp"

namespace ctrlink {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

template <class Int>
Int parse_int(std::string_view text) {
  Int out{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    fail(Errc::ParseError, "bad integer '" + std::string(text) + "'");
  }
  return out;
}

}  // namespace

ValueKind kind_of(const ChannelValue& value) noexcept {
  return static_cast<ValueKind>(value.index());
}

std::string_view to_string(ValueKind kind) noexcept {
  switch (kind) {
    case ValueKind::Digital: return "digital";
    case ValueKind::Analog: return "analog";
    case ValueKind::Scalar: return "scalar";
    case ValueKind::Text: return "text";
  }
  return "unknown";
}

bool is_text_byte(char c) noexcept {
  return c == '\n' || (c >= 0x20 && c <= 0x7E);
}

std::optional<std::int64_t> milli_value(const ChannelValue& value) noexcept {
  return std::visit(overloaded{
                        [](const Digital& d) -> std::optional<std::int64_t> { return d.level ? 1000 : 0; },
                        [](const Analog& a) -> std::optional<std::int64_t> { return std::int64_t{a.raw} * 1000; },
                        [](const Scalar& s) -> std::optional<std::int64_t> { return s.milli; },
                        [](const Text&) -> std::optional<std::int64_t> { return std::nullopt; },
                    },
                    value);
}

std::string format_value(const ChannelValue& value) {
  std::string out(to_string(kind_of(value)));
  out += ':';
  std::visit(overloaded{
                 [&](const Digital& d) { out += d.level ? '1' : '0'; },
                 [&](const Analog& a) { out += std::to_string(a.raw); },
                 [&](const Scalar& s) { out += std::to_string(s.milli); },
                 [&](const Text& t) { out += t.text; },
             },
             value);
  return out;
}

ChannelValue parse_value(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    fail(Errc::ParseError, "expected kind:value, got '" + std::string(text) + "'");
  }
  const auto kind = text.substr(0, colon);
  const auto body = text.substr(colon + 1);
  if (kind == "digital") {
    const auto level = parse_int<int>(body);
    if (level != 0 && level != 1) fail(Errc::ParseError, "digital value must be 0 or 1");
    return Digital{level == 1};
  }
  if (kind == "analog") {
    const auto raw = parse_int<std::uint16_t>(body);
    if (raw > kAnalogMax) fail(Errc::ParseError, "analog value above 1023");
    return Analog{raw};
  }
  if (kind == "scalar") return Scalar{parse_int<std::int32_t>(body)};
  if (kind == "text") {
    std::string decoded;
    // Allow "\n" escapes so LCD line breaks can be typed on a command line.
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '\\' && i + 1 < body.size() && body[i + 1] == 'n') {
        decoded += '\n';
        ++i;
      } else {
        decoded += body[i];
      }
    }
    return Text{std::move(decoded)};
  }
  fail(Errc::ParseError, "unknown value kind '" + std::string(kind) + "'");
}

}  // namespace ctrlink
