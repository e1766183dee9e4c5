#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ddqn.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "morl.hpp"
#include "observe.hpp"
#include "rewards.hpp"

namespace lexmorl {

/// Linear decay from start to end over decay_steps, then constant.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.1;
    std::uint64_t decay_steps = 1;

    double value(std::uint64_t step) const {
        if (step >= decay_steps) return end;
        const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
        return start + (end - start) * frac;
    }

    void validate(std::string_view name) const {
        if (!(start >= end && end >= 0.0 && start <= 1.0))
            throw ConfigError(std::string(name) + ": epsilon needs 1 >= start >= end >= 0");
        if (decay_steps == 0) throw ConfigError(std::string(name) + ": decay_steps must be positive");
    }
};

struct TrainConfig {
    std::uint64_t total_steps = 50000;
    double gamma = 0.99;
    std::size_t batch_size = 32;
    std::uint64_t target_sync = 1000;
    std::size_t warmup = 1000;            ///< transitions per buffer before learning starts
    std::size_t replay_capacity = 10000;
    std::uint64_t train_every = 1;        ///< environment steps per gradient update
    std::uint64_t checkpoint_every = 10000;
    double lr_safety = 0.00025;
    double lr_speed = 0.0025;
    double lr_sorl = 0.00025;
    double rms_rho = 0.95;
    double rms_epsilon = 1e-6;
    LossKind loss = LossKind::MeanSquared;
    EpsilonSchedule eps_safety{0.9, 0.3, 40000};
    EpsilonSchedule eps_speed{0.8, 0.1, 40000};
    EpsilonSchedule eps_sorl{0.85, 0.2, 40000};
    std::uint64_t seed = 1;

    void validate() const {
        if (total_steps == 0) throw ConfigError("training: total_steps must be positive");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("training: gamma must lie in [0, 1)");
        if (batch_size == 0 || target_sync == 0 || train_every == 0 || checkpoint_every == 0 || replay_capacity == 0)
            throw ConfigError("training: sizes and cadences must be positive");
        if (warmup < 1) throw ConfigError("training: warmup must be at least 1");
        if (!(lr_safety > 0.0 && lr_speed > 0.0 && lr_sorl > 0.0)) throw ConfigError("training: learning rates must be positive");
        if (!(rms_rho >= 0.0 && rms_rho < 1.0) || !(rms_epsilon > 0.0)) throw ConfigError("training: bad RMSProp constants");
        eps_safety.validate("eps_safety");
        eps_speed.validate("eps_speed");
        eps_sorl.validate("eps_sorl");
    }
};

struct ThresholdConfig {
    ThresholdMode mode = ThresholdMode::Literal;
    double safety = 0.9;
    double speed = 1.0;

    ObjectiveChain chain() const {
        return ObjectiveChain({{"safety", safety, std::nullopt}, {"speed", speed, std::nullopt}}, mode);
    }
};

/// Complete resolved configuration of a run.
struct RunConfig {
    EnvConfig env;
    std::string map = "train";
    GridSpec grid;
    RewardConfig reward;
    TrainConfig train;
    ThresholdConfig threshold;

    void validate() const {
        env.validate();
        grid.validate();
        reward.safety.validate();
        train.validate();
        (void)threshold.chain();
    }
};

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<ThresholdMode> {
    static constexpr std::pair<ThresholdMode, std::string_view> items[] = {{ThresholdMode::Literal, "literal"},
                                                                           {ThresholdMode::Slack, "slack"}};
};
template <>
struct EnumNames<PenaltyShape> {
    static constexpr std::pair<PenaltyShape, std::string_view> items[] = {
        {PenaltyShape::LiteralNegated, "literal_negated"}, {PenaltyShape::ProximityIncreasing, "proximity_increasing"}};
};
template <>
struct EnumNames<SpeedRewardShape> {
    static constexpr std::pair<SpeedRewardShape, std::string_view> items[] = {{SpeedRewardShape::Literal, "literal"},
                                                                              {SpeedRewardShape::Corrected, "corrected"}};
};
template <>
struct EnumNames<LossKind> {
    static constexpr std::pair<LossKind, std::string_view> items[] = {{LossKind::MeanSquared, "mse"},
                                                                      {LossKind::Huber, "huber"}};
};

template <typename E>
std::string enum_name(E e) {
    for (const auto& [v, n] : EnumNames<E>::items)
        if (v == e) return std::string(n);
    throw InvalidArgument("unnamed enum value");
}

template <typename E>
E enum_from_name(const std::string& s, std::string_view what) {
    for (const auto& [v, n] : EnumNames<E>::items)
        if (n == s) return v;
    throw ConfigError("unknown " + std::string(what) + " '" + s + "'");
}

/// Rejects keys outside the allowed set so typos fail loudly.
inline void check_keys(const nlohmann::json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == k;
        if (!ok) throw ConfigError(std::string(section) + ": unknown key '" + k + "'");
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

template <typename E>
void read_enum(const nlohmann::json& j, const char* key, E& field) {
    if (j.contains(key)) field = enum_from_name<E>(j.at(key).get<std::string>(), key);
}

inline nlohmann::json schedule_json(const EpsilonSchedule& s) {
    return {{"start", s.start}, {"end", s.end}, {"decay_steps", s.decay_steps}};
}

inline void read_schedule(const nlohmann::json& j, const char* key, EpsilonSchedule& s) {
    if (!j.contains(key)) return;
    const auto& o = j.at(key);
    check_keys(o, key, {"start", "end", "decay_steps"});
    read(o, "start", s.start);
    read(o, "end", s.end);
    read(o, "decay_steps", s.decay_steps);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
    using detail::enum_name;
    const EnvConfig& e = c.env;
    return {
        {"environment",
         {{"map", c.map},
          {"dt", e.dt},
          {"v_ref", e.v_ref},
          {"v_hard_cap", e.v_hard_cap},
          {"max_pedestrians", e.max_pedestrians},
          {"vicinity_radius", e.vicinity_radius},
          {"despawn_radius", e.despawn_radius},
          {"crossing_factor", e.crossing_factor},
          {"step_cap", e.step_cap},
          {"ped_speed_min", e.ped_speed_min},
          {"ped_speed_max", e.ped_speed_max},
          {"ped_radius", e.ped_radius},
          {"ped_heading_noise_deg", e.ped_heading_noise_deg},
          {"ped_yield_margin", e.ped_yield_margin},
          {"ped_yield_horizon", e.ped_yield_horizon},
          {"ego_length", e.ego_length},
          {"ego_width", e.ego_width},
          {"front_horizon", e.front_horizon},
          {"grid", {{"rows", c.grid.rows}, {"cols", c.grid.cols}, {"cell", c.grid.cell}, {"rear_fraction", c.grid.rear_fraction}}}}},
        {"reward",
         {{"collision_penalty", c.reward.safety.collision_penalty},
          {"max_deceleration", c.reward.safety.max_deceleration},
          {"min_distance", c.reward.safety.min_distance},
          {"penalty_shape", enum_name(c.reward.safety.shape)},
          {"speed_shape", enum_name(c.reward.speed_shape)}}},
        {"training",
         {{"total_steps", c.train.total_steps},
          {"gamma", c.train.gamma},
          {"batch_size", c.train.batch_size},
          {"target_sync", c.train.target_sync},
          {"warmup", c.train.warmup},
          {"replay_capacity", c.train.replay_capacity},
          {"train_every", c.train.train_every},
          {"checkpoint_every", c.train.checkpoint_every},
          {"lr_safety", c.train.lr_safety},
          {"lr_speed", c.train.lr_speed},
          {"lr_sorl", c.train.lr_sorl},
          {"rms_rho", c.train.rms_rho},
          {"rms_epsilon", c.train.rms_epsilon},
          {"loss", enum_name(c.train.loss)},
          {"eps_safety", detail::schedule_json(c.train.eps_safety)},
          {"eps_speed", detail::schedule_json(c.train.eps_speed)},
          {"eps_sorl", detail::schedule_json(c.train.eps_sorl)},
          {"seed", c.train.seed}}},
        {"threshold", {{"mode", enum_name(c.threshold.mode)}, {"safety", c.threshold.safety}, {"speed", c.threshold.speed}}},
    };
}

/// Missing fields keep their defaults; unknown fields are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using namespace detail;
    RunConfig c;
    try {
        check_keys(j, "config", {"environment", "reward", "training", "threshold"});
        if (j.contains("environment")) {
            const auto& e = j.at("environment");
            check_keys(e, "environment",
                       {"map", "dt", "v_ref", "v_hard_cap", "max_pedestrians", "vicinity_radius", "despawn_radius",
                        "crossing_factor", "step_cap", "ped_speed_min", "ped_speed_max", "ped_radius",
                        "ped_heading_noise_deg", "ped_yield_margin", "ped_yield_horizon", "ego_length", "ego_width", "front_horizon", "grid"});
            read(e, "map", c.map);
            read(e, "dt", c.env.dt);
            read(e, "v_ref", c.env.v_ref);
            read(e, "v_hard_cap", c.env.v_hard_cap);
            read(e, "max_pedestrians", c.env.max_pedestrians);
            read(e, "vicinity_radius", c.env.vicinity_radius);
            read(e, "despawn_radius", c.env.despawn_radius);
            read(e, "crossing_factor", c.env.crossing_factor);
            read(e, "step_cap", c.env.step_cap);
            read(e, "ped_speed_min", c.env.ped_speed_min);
            read(e, "ped_speed_max", c.env.ped_speed_max);
            read(e, "ped_radius", c.env.ped_radius);
            read(e, "ped_heading_noise_deg", c.env.ped_heading_noise_deg);
            read(e, "ped_yield_margin", c.env.ped_yield_margin);
            read(e, "ped_yield_horizon", c.env.ped_yield_horizon);
            read(e, "ego_length", c.env.ego_length);
            read(e, "ego_width", c.env.ego_width);
            read(e, "front_horizon", c.env.front_horizon);
            if (e.contains("grid")) {
                const auto& g = e.at("grid");
                check_keys(g, "grid", {"rows", "cols", "cell", "rear_fraction"});
                read(g, "rows", c.grid.rows);
                read(g, "cols", c.grid.cols);
                read(g, "cell", c.grid.cell);
                read(g, "rear_fraction", c.grid.rear_fraction);
            }
        }
        if (j.contains("reward")) {
            const auto& r = j.at("reward");
            check_keys(r, "reward", {"collision_penalty", "max_deceleration", "min_distance", "penalty_shape", "speed_shape"});
            read(r, "collision_penalty", c.reward.safety.collision_penalty);
            read(r, "max_deceleration", c.reward.safety.max_deceleration);
            read(r, "min_distance", c.reward.safety.min_distance);
            read_enum(r, "penalty_shape", c.reward.safety.shape);
            read_enum(r, "speed_shape", c.reward.speed_shape);
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            check_keys(t, "training",
                       {"total_steps", "gamma", "batch_size", "target_sync", "warmup", "replay_capacity", "train_every",
                        "checkpoint_every", "lr_safety", "lr_speed", "lr_sorl", "rms_rho", "rms_epsilon", "loss",
                        "eps_safety", "eps_speed", "eps_sorl", "seed"});
            read(t, "total_steps", c.train.total_steps);
            read(t, "gamma", c.train.gamma);
            read(t, "batch_size", c.train.batch_size);
            read(t, "target_sync", c.train.target_sync);
            read(t, "warmup", c.train.warmup);
            read(t, "replay_capacity", c.train.replay_capacity);
            read(t, "train_every", c.train.train_every);
            read(t, "checkpoint_every", c.train.checkpoint_every);
            read(t, "lr_safety", c.train.lr_safety);
            read(t, "lr_speed", c.train.lr_speed);
            read(t, "lr_sorl", c.train.lr_sorl);
            read(t, "rms_rho", c.train.rms_rho);
            read(t, "rms_epsilon", c.train.rms_epsilon);
            read_enum(t, "loss", c.train.loss);
            read_schedule(t, "eps_safety", c.train.eps_safety);
            read_schedule(t, "eps_speed", c.train.eps_speed);
            read_schedule(t, "eps_sorl", c.train.eps_sorl);
            read(t, "seed", c.train.seed);
        }
        if (j.contains("threshold")) {
            const auto& t = j.at("threshold");
            check_keys(t, "threshold", {"mode", "safety", "speed"});
            read_enum(t, "mode", c.threshold.mode);
            read(t, "safety", c.threshold.safety);
            read(t, "speed", c.threshold.speed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.env.safety = c.reward.safety;
    c.reward.v_ref = c.env.v_ref;
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace lexmorl
