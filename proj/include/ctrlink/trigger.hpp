/**
 * @file trigger.hpp
 * @brief Rules that turn channel samples into named game actions.
 */

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ctrlink/value.hpp"

namespace ctrlink {

inline constexpr std::uint32_t kMaxDebounceMs = 10000;

namespace pred {
struct GreaterThan {
  std::int64_t threshold = 0;
  friend bool operator==(const GreaterThan&, const GreaterThan&) = default;
};
struct LessThan {
  std::int64_t threshold = 0;
  friend bool operator==(const LessThan&, const LessThan&) = default;
};
struct Between {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  friend bool operator==(const Between&, const Between&) = default;
};
struct RisingEdge {
  friend bool operator==(const RisingEdge&, const RisingEdge&) = default;
};
struct FallingEdge {
  friend bool operator==(const FallingEdge&, const FallingEdge&) = default;
};
}  // namespace pred

using Predicate = std::variant<pred::GreaterThan, pred::LessThan, pred::Between, pred::RisingEdge, pred::FallingEdge>;

struct TriggerRule {
  std::string rule_id;
  std::uint8_t channel = 0;
  Predicate predicate;
  std::uint32_t debounce_ms = 0;
  std::string action;

  friend bool operator==(const TriggerRule&, const TriggerRule&) = default;
};

struct ActionEvent {
  std::uint64_t t_ms = 0;
  std::string rule_id;
  std::string action;
  std::int64_t sample_value = 0;

  friend bool operator==(const ActionEvent&, const ActionEvent&) = default;
};

/// Whether `value` satisfies `p`, or nullopt when the predicate does not apply
/// to the value's kind (edges need Digital; Text never matches anything).
std::optional<bool> satisfies(const Predicate& p, const ChannelValue& value) noexcept;

/// Line format: `<id> <channel> <predicate> <debounce_ms> <action>` where the
/// predicate is `gt N`, `lt N`, `between LO HI`, `rising` or `falling`.
/// Blank lines and `#` comments are skipped.
std::vector<TriggerRule> parse_rules(std::string_view text);
std::vector<TriggerRule> load_rules(const std::string& path);

/// Renders a rule back into the line format.
std::string format_rule(const TriggerRule& rule);

class TriggerEngine {
 public:
  explicit TriggerEngine(std::vector<TriggerRule> rules = {});

  /// Events fired by this sample, ordered by rule_id. Throws TimeRegression
  /// when `t_ms` is below the previous sample's.
  std::vector<ActionEvent> evaluate_sample(std::uint64_t t_ms, std::uint8_t channel, const ChannelValue& value);

  const std::vector<TriggerRule>& rules() const noexcept { return rules_; }

 private:
  struct RuleState {
    std::optional<bool> previous;
    std::optional<std::uint64_t> last_fire;
  };

  std::vector<TriggerRule> rules_;  // sorted by rule_id
  std::vector<RuleState> state_;
  std::optional<std::uint64_t> last_t_;
};

/// `{"t_ms":…,"rule":…,"action":…,"value":…}`
std::string to_json_line(const ActionEvent& event);

}  // namespace ctrlink
