#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace lexmorl {

/// Safety-relevant outcome of one step. Collision wins over near-collision.
struct SafetyEvent {
    enum class Kind { Clear, NearCollision, Collision };

    Kind kind = Kind::Clear;
    double distance = 0.0;  ///< d_p, meters to the nearest front crossing pedestrian (NearCollision only)

    static SafetyEvent clear() { return {}; }
    static SafetyEvent collision() { return {Kind::Collision, 0.0}; }
    static SafetyEvent near_collision(double d_p) {
        if (!(d_p > 0.0)) throw InvalidArgument("near-collision distance must be positive");
        return {Kind::NearCollision, d_p};
    }

    friend bool operator==(const SafetyEvent&, const SafetyEvent&) = default;
};

struct RewardVector {
    double safety = 0.0;
    double speed = 0.0;

    friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

enum class PenaltyShape {
    LiteralNegated,       ///< -exp((d_p - d_r) / d_r)
    ProximityIncreasing,  ///< -exp((d_r - d_p) / d_r) / e
};

enum class SpeedRewardShape {
    Literal,    ///< lambda * (v_ref - v) on (0, v_ref]
    Corrected,  ///< lambda * v on (0, v_ref]
};

struct SafetyParams {
    double collision_penalty = -4.0;  ///< r_c
    double max_deceleration = 5.0;    ///< a_max, m/s^2 (brake magnitude)
    double min_distance = 2.0;        ///< d_0, m
    PenaltyShape shape = PenaltyShape::LiteralNegated;

    void validate() const {
        if (!(max_deceleration > 0.0)) throw InvalidArgument("a_max must be positive");
        if (!(min_distance > 0.0)) throw InvalidArgument("d_0 must be positive");
        if (!(collision_penalty < 0.0)) throw InvalidArgument("collision penalty must be negative");
    }
};

struct RewardConfig {
    SafetyParams safety;
    double v_ref = 8.0;
    SpeedRewardShape speed_shape = SpeedRewardShape::Literal;
};

/// Speed-dependent near-collision horizon max(v^2 / 2 a_max, d_0).
inline double dynamic_range(double v_ev, const SafetyParams& p) {
    if (!(v_ev >= 0.0)) throw InvalidArgument("dynamic_range: speed must be non-negative");
    return std::max(v_ev * v_ev / (2.0 * p.max_deceleration), p.min_distance);
}

/// Penalty for a front crossing pedestrian at distance d_p inside d_r.
/// Both shapes lie in [-1, -1/e].
inline double near_collision_penalty(double d_p, double d_r, const SafetyParams& p) {
    if (!(d_p > 0.0) || !(d_r > 0.0)) throw InvalidArgument("near_collision_penalty: distances must be positive");
    if (d_p > d_r) throw ContractViolation("near_collision_penalty: pedestrian outside the dynamic range");
    switch (p.shape) {
        case PenaltyShape::LiteralNegated: return -std::exp((d_p - d_r) / d_r);
        case PenaltyShape::ProximityIncreasing: return -std::exp((d_r - d_p) / d_r) / std::numbers::e;
    }
    return 0.0;
}

inline double safety_reward(const SafetyEvent& event, double v_ev, const SafetyParams& p) {
    switch (event.kind) {
        case SafetyEvent::Kind::Collision: return p.collision_penalty;
        case SafetyEvent::Kind::NearCollision:
            return near_collision_penalty(event.distance, dynamic_range(v_ev, p), p);
        case SafetyEvent::Kind::Clear: return 0.0;
    }
    return 0.0;
}

inline double speed_reward(double v_ev, double v_ref, SpeedRewardShape shape = SpeedRewardShape::Literal) {
    if (!(v_ref > 0.0)) throw InvalidArgument("speed_reward: v_ref must be positive");
    const double lambda = 1.0 / v_ref;
    if (v_ev <= 0.0) return -1.0;
    if (v_ev > v_ref) return -0.5;
    return shape == SpeedRewardShape::Literal ? lambda * (v_ref - v_ev) : lambda * v_ev;
}

inline RewardVector reward_vector(const SafetyEvent& event, double v_ev, const RewardConfig& cfg) {
    return {safety_reward(event, v_ev, cfg.safety), speed_reward(v_ev, cfg.v_ref, cfg.speed_shape)};
}

/// Single-objective baseline reward: plain sum of the components.
inline double scalarize(const RewardVector& r) { return r.safety + r.speed; }

}  // namespace lexmorl
