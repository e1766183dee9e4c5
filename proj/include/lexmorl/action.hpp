#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "errors.hpp"

namespace lexmorl {

/// Longitudinal high-level actions. The enumerator value is the dense
/// index used to address Q-vectors.
enum class Action : std::size_t { Accelerate = 0, Decelerate = 1, Brake = 2, Maintain = 3 };

inline constexpr std::size_t kNumActions = 4;

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::Accelerate, Action::Decelerate, Action::Brake, Action::Maintain};

/// Longitudinal acceleration in m/s^2.
constexpr double acceleration(Action a) {
    switch (a) {
        case Action::Accelerate: return 1.0;
        case Action::Decelerate: return -1.0;
        case Action::Brake: return -5.0;
        case Action::Maintain: return 0.0;
    }
    return 0.0;
}

constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

inline Action action_from_index(std::size_t i) {
    if (i >= kNumActions) throw InvalidArgument("action index out of range");
    return static_cast<Action>(i);
}

constexpr std::string_view name_of(Action a) {
    switch (a) {
        case Action::Accelerate: return "accelerate";
        case Action::Decelerate: return "decelerate";
        case Action::Brake: return "brake";
        case Action::Maintain: return "maintain";
    }
    return "?";
}

inline std::optional<Action> action_from_name(std::string_view name) {
    for (Action a : kAllActions)
        if (name_of(a) == name) return a;
    return std::nullopt;
}

using QRow = std::array<double, kNumActions>;

}  // namespace lexmorl
