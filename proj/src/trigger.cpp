#include "ctrlink/trigger.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ctrlink/error.hpp"

namespace ctrlink {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void syntax_error(std::size_t line, const std::string& what) {
  fail(Errc::SyntaxError, "line " + std::to_string(line) + ": " + what);
}

template <class T>
T parse_number(const std::string& token, std::size_t line, const char* what) {
  T out{};
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, out);
  if (ec != std::errc{} || ptr != end) syntax_error(line, std::string("bad ") + what + " '" + token + "'");
  return out;
}

}  // namespace

std::optional<bool> satisfies(const Predicate& p, const ChannelValue& value) noexcept {
  const auto milli = milli_value(value);
  if (!milli) return std::nullopt;
  const auto* digital = std::get_if<Digital>(&value);
  return std::visit(overloaded{
                        [&](const pred::GreaterThan& g) -> std::optional<bool> { return *milli > g.threshold; },
                        [&](const pred::LessThan& l) -> std::optional<bool> { return *milli < l.threshold; },
                        [&](const pred::Between& b) -> std::optional<bool> { return *milli >= b.lo && *milli <= b.hi; },
                        [&](const pred::RisingEdge&) -> std::optional<bool> {
                          if (!digital) return std::nullopt;
                          return digital->level;
                        },
                        [&](const pred::FallingEdge&) -> std::optional<bool> {
                          if (!digital) return std::nullopt;
                          return !digital->level;
                        },
                    },
                    p);
}

std::vector<TriggerRule> parse_rules(std::string_view text) {
  std::vector<TriggerRule> rules;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream words(raw);
    std::vector<std::string> tok;
    for (std::string w; words >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (tok.size() < 5) syntax_error(line_no, "expected <id> <channel> <predicate> <debounce_ms> <action>");

    TriggerRule rule;
    rule.rule_id = tok[0];
    rule.channel = parse_number<std::uint8_t>(tok[1], line_no, "channel");
    std::size_t next = 3;
    const auto& kind = tok[2];
    if (kind == "gt" || kind == "lt") {
      const auto n = parse_number<std::int64_t>(tok[3], line_no, "threshold");
      rule.predicate = kind == "gt" ? Predicate{pred::GreaterThan{n}} : Predicate{pred::LessThan{n}};
      next = 4;
    } else if (kind == "between") {
      if (tok.size() < 7) syntax_error(line_no, "between needs LO and HI");
      const auto lo = parse_number<std::int64_t>(tok[3], line_no, "lower bound");
      const auto hi = parse_number<std::int64_t>(tok[4], line_no, "upper bound");
      if (lo > hi) fail(Errc::BadPredicate, "line " + std::to_string(line_no) + ": between with lo > hi");
      rule.predicate = pred::Between{lo, hi};
      next = 5;
    } else if (kind == "rising") {
      rule.predicate = pred::RisingEdge{};
    } else if (kind == "falling") {
      rule.predicate = pred::FallingEdge{};
    } else {
      syntax_error(line_no, "unknown predicate '" + kind + "'");
    }
    if (tok.size() != next + 2) syntax_error(line_no, "expected <debounce_ms> <action> after the predicate");
    rule.debounce_ms = parse_number<std::uint32_t>(tok[next], line_no, "debounce");
    if (rule.debounce_ms > kMaxDebounceMs) {
      fail(Errc::BadPredicate, "line " + std::to_string(line_no) + ": debounce above 10000 ms");
    }
    rule.action = tok[next + 1];

    const bool duplicate =
        std::any_of(rules.begin(), rules.end(), [&](const TriggerRule& r) { return r.rule_id == rule.rule_id; });
    if (duplicate) fail(Errc::DuplicateRuleId, "line " + std::to_string(line_no) + ": " + rule.rule_id);
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<TriggerRule> load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_rules(text.str());
}

std::string format_rule(const TriggerRule& rule) {
  const auto predicate = std::visit(
      overloaded{
          [](const pred::GreaterThan& g) { return "gt " + std::to_string(g.threshold); },
          [](const pred::LessThan& l) { return "lt " + std::to_string(l.threshold); },
          [](const pred::Between& b) { return "between " + std::to_string(b.lo) + " " + std::to_string(b.hi); },
          [](const pred::RisingEdge&) { return std::string("rising"); },
          [](const pred::FallingEdge&) { return std::string("falling"); },
      },
      rule.predicate);
  return rule.rule_id + " " + std::to_string(rule.channel) + " " + predicate + " " +
         std::to_string(rule.debounce_ms) + " " + rule.action;
}

TriggerEngine::TriggerEngine(std::vector<TriggerRule> rules) : rules_(std::move(rules)) {
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const TriggerRule& a, const TriggerRule& b) { return a.rule_id < b.rule_id; });
  state_.resize(rules_.size());
}

std::vector<ActionEvent> TriggerEngine::evaluate_sample(std::uint64_t t_ms, std::uint8_t channel,
                                                        const ChannelValue& value) {
  if (last_t_ && t_ms < *last_t_) {
    fail(Errc::TimeRegression, std::to_string(t_ms) + " ms after " + std::to_string(*last_t_) + " ms");
  }
  last_t_ = t_ms;

  std::vector<ActionEvent> fired;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    if (rule.channel != channel) continue;
    const auto now = satisfies(rule.predicate, value);
    if (!now) continue;
    auto& st = state_[i];
    const bool edge = st.previous.has_value() && !*st.previous && *now;
    st.previous = now;
    if (!edge) continue;
    if (st.last_fire && t_ms - *st.last_fire < rule.debounce_ms) continue;
    st.last_fire = t_ms;
    fired.push_back({t_ms, rule.rule_id, rule.action, *milli_value(value)});
  }
  return fired;
}

std::string to_json_line(const ActionEvent& event) {
  nlohmann::ordered_json j;
  j["t_ms"] = event.t_ms;
  j["rule"] = event.rule_id;
  j["action"] = event.action;
  j["value"] = event.sample_value;
  return j.dump();
}

}  // namespace ctrlink
