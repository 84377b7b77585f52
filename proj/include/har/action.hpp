#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace har {

enum class ActionLabel { Boxing = 0, Clapping = 1, Running = 2, Walking = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<ActionLabel, kNumActions> kAllActions{
    ActionLabel::Boxing, ActionLabel::Clapping, ActionLabel::Running, ActionLabel::Walking};

inline constexpr int index_of(ActionLabel a) { return static_cast<int>(a); }

inline std::string_view name_of(ActionLabel a) {
  switch (a) {
    case ActionLabel::Boxing: return "boxing";
    case ActionLabel::Clapping: return "clapping";
    case ActionLabel::Running: return "running";
    case ActionLabel::Walking: return "walking";
  }
  return "?";
}

inline std::string display_name(ActionLabel a) {
  std::string s(name_of(a));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::optional<ActionLabel> parse_action(std::string_view s) {
  for (auto a : kAllActions)
    if (s == name_of(a) || s == display_name(a)) return a;
  return std::nullopt;
}

inline std::optional<ActionLabel> action_from_index(int i) {
  if (i < 0 || i >= kNumActions) return std::nullopt;
  return static_cast<ActionLabel>(i);
}

}  // namespace har
