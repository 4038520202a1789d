/**
 * @file record.hpp
 * @brief Line-oriented JSON recordings of channel values.
 *
 * One object per line with a fixed field order:
 * `{"t_ms":120,"channel":0,"kind":"analog","value":512}`.
 */

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlink/device.hpp"
#include "ctrlink/value.hpp"

namespace ctrlink {

struct RecordLine {
  std::uint64_t t_ms = 0;
  std::uint8_t channel = 0;
  ChannelValue value;

  friend bool operator==(const RecordLine&, const RecordLine&) = default;
};

std::string write_record_line(const RecordLine& record);

/// Throws ParseError naming `line_no`.
RecordLine parse_record_line(std::string_view text, std::size_t line_no = 1);

void write_records(std::ostream& out, std::span<const RecordLine> records);

/// Reads every non-blank line. Throws ParseError when t_ms goes backwards.
std::vector<RecordLine> read_records(std::istream& in);
std::vector<RecordLine> load_records(const std::string& path);

/// Trace of raw samples that reproduces the recorded values of one channel
/// through the module's conversion. Records keep their t_ms. Throws
/// ConfigError when a value cannot come from the module.
sim::Trace trace_from_records(std::uint8_t module_type, std::span<const RecordLine> records);

}  // namespace ctrlink
