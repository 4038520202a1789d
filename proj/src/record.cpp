#include "ctrlink/record.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "ctrlink/catalog.hpp"
#include "ctrlink/error.hpp"

namespace ctrlink {

using nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
  fail(Errc::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

std::int64_t integer(const ordered_json& v, std::int64_t lo, std::int64_t hi, std::size_t line_no, const char* key) {
  if (v.is_number_unsigned()) {
    const auto n = v.get<std::uint64_t>();
    if (hi >= 0 && n <= static_cast<std::uint64_t>(hi) && static_cast<std::int64_t>(n) >= lo) {
      return static_cast<std::int64_t>(n);
    }
  } else if (v.is_number_integer()) {
    const auto n = v.get<std::int64_t>();
    if (n >= lo && n <= hi) return n;
  }
  parse_error(line_no, std::string("bad '") + key + "': " + v.dump());
}

}  // namespace

std::string write_record_line(const RecordLine& record) {
  ordered_json j;
  j["t_ms"] = record.t_ms;
  j["channel"] = record.channel;
  j["kind"] = std::string(to_string(kind_of(record.value)));
  std::visit(overloaded{
                 [&](const Digital& d) { j["value"] = d.level ? 1 : 0; },
                 [&](const Analog& a) { j["value"] = a.raw; },
                 [&](const Scalar& s) { j["value"] = s.milli; },
                 [&](const Text& t) { j["value"] = t.text; },
             },
             record.value);
  return j.dump();
}

RecordLine parse_record_line(std::string_view text, std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error&) {
    parse_error(line_no, "not a JSON object");
  }
  if (!j.is_object()) parse_error(line_no, "not a JSON object");
  for (const char* key : {"t_ms", "channel", "kind", "value"}) {
    if (!j.contains(key)) parse_error(line_no, std::string("missing '") + key + "'");
  }
  if (j.size() != 4) parse_error(line_no, "unexpected fields");

  RecordLine r;
  if (!j["t_ms"].is_number_unsigned()) parse_error(line_no, "t_ms must be a non-negative integer");
  r.t_ms = j["t_ms"].get<std::uint64_t>();
  r.channel = static_cast<std::uint8_t>(integer(j["channel"], 0, 255, line_no, "channel"));
  if (!j["kind"].is_string()) parse_error(line_no, "kind must be a string");
  const auto kind = j["kind"].get<std::string>();
  const auto& v = j["value"];
  if (kind == "digital") {
    r.value = Digital{integer(v, 0, 1, line_no, "value") == 1};
  } else if (kind == "analog") {
    r.value = Analog{static_cast<std::uint16_t>(integer(v, 0, kAnalogMax, line_no, "value"))};
  } else if (kind == "scalar") {
    r.value = Scalar{static_cast<std::int32_t>(integer(v, INT32_MIN, INT32_MAX, line_no, "value"))};
  } else if (kind == "text") {
    if (!v.is_string()) parse_error(line_no, "text value must be a string");
    auto s = v.get<std::string>();
    if (s.size() > kTextMax) parse_error(line_no, "text longer than " + std::to_string(kTextMax));
    for (const char c : s) {
      if (!is_text_byte(c)) parse_error(line_no, "text holds a non-printable byte");
    }
    r.value = Text{std::move(s)};
  } else {
    parse_error(line_no, "unknown kind '" + kind + "'");
  }
  return r;
}

void write_records(std::ostream& out, std::span<const RecordLine> records) {
  for (const auto& r : records) out << write_record_line(r) << '\n';
}

std::vector<RecordLine> read_records(std::istream& in) {
  std::vector<RecordLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto r = parse_record_line(line, line_no);
    if (!out.empty() && r.t_ms < out.back().t_ms) parse_error(line_no, "t_ms goes backwards");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RecordLine> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot open " + path);
  return read_records(in);
}

sim::Trace trace_from_records(std::uint8_t module_type, std::span<const RecordLine> records) {
  sim::Trace trace;
  for (const auto& r : records) {
    const auto raw = raw_for_value(module_type, r.value);
    if (!raw) {
      fail(Errc::ConfigError, format_value(r.value) + " cannot come from " + module_name(module_type));
    }
    if (!trace.samples.empty() && trace.samples.back().t_ms == r.t_ms) {
      trace.samples.back().raw = *raw;
    } else {
      trace.samples.push_back({r.t_ms, *raw});
    }
  }
  if (trace.samples.empty()) fail(Errc::ConfigError, "no records for the trace");
  return trace;
}

}  // namespace ctrlink
