#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "action.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "map.hpp"
#include "random.hpp"
#include "rewards.hpp"

namespace lexmorl {

struct EnvConfig {
    double dt = 0.1;
    double v_ref = 8.0;
    double v_hard_cap = 15.0;
    std::size_t max_pedestrians = 30;
    double vicinity_radius = 35.0;
    double despawn_radius = 40.0;
    double crossing_factor = 0.8;
    std::size_t step_cap = 2000;
    std::uint64_t seed = 1;

    double ped_speed_min = 0.4;
    double ped_speed_max = 1.2;
    double ped_radius = 0.3;
    double ped_heading_noise_deg = 5.0;
    double ped_yield_margin = 0.3;  ///< pedestrians never step closer than this to the ego footprint
    double ped_yield_horizon = 1.0; ///< pedestrians also avoid the lane ahead: max(v * horizon, near-collision range)
    double ego_length = 4.5;
    double ego_width = 2.0;
    double front_horizon = 50.0;    ///< route look-ahead for front pedestrian search

    SafetyParams safety;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("env: dt must be positive");
        if (!(v_ref > 0.0) || !(v_hard_cap > 0.0)) throw ConfigError("env: speeds must be positive");
        if (!(despawn_radius > vicinity_radius) || !(vicinity_radius > 0.0))
            throw ConfigError("env: despawn radius must exceed a positive vicinity radius");
        if (!(crossing_factor >= 0.0 && crossing_factor <= 1.0)) throw ConfigError("env: crossing factor outside [0, 1]");
        if (step_cap == 0) throw ConfigError("env: step cap must be positive");
        if (!(ped_speed_min > 0.0 && ped_speed_max >= ped_speed_min)) throw ConfigError("env: bad pedestrian speed range");
        if (!(ego_length > 0.0 && ego_width > 0.0 && ped_radius > 0.0)) throw ConfigError("env: bad body dimensions");
        if (!(ped_yield_margin >= 0.0 && ped_yield_horizon >= 0.0)) throw ConfigError("env: yield settings must be non-negative");
        safety.validate();
    }
};

struct EgoState {
    Vec2 position;
    double heading = 0.0;
    double speed = 0.0;
    double arc = 0.0;            ///< arc length along the route
    std::size_t waypoint = 0;    ///< index of the waypoint the current segment starts at
    double length = 4.5;
    double width = 2.0;

    OrientedRect footprint() const { return {position, heading, length, width}; }
};

struct Pedestrian {
    std::uint64_t id = 0;
    Vec2 position;
    Vec2 velocity;
    Vec2 goal;
    bool crossing_allowed = false;
    double radius = 0.3;
    double speed = 1.0;    ///< walking speed when moving
    double heading = 0.0;  ///< radians, last direction of travel
};

enum class DoneReason { None, Goal, Collision, StepCap };

constexpr std::string_view name_of(DoneReason r) {
    switch (r) {
        case DoneReason::None: return "none";
        case DoneReason::Goal: return "goal";
        case DoneReason::Collision: return "collision";
        case DoneReason::StepCap: return "step_cap";
    }
    return "?";
}

struct StepInfo {
    double distance = 0.0;      ///< route distance covered this step
    bool in_intersection = false;
    std::optional<double> nearest_front_pedestrian;
};

struct StepOutcome {
    SafetyEvent event;
    bool done = false;
    DoneReason reason = DoneReason::None;
    StepInfo info;
};

struct EnvState {
    EgoState ego;
    std::vector<Pedestrian> pedestrians;
    std::size_t steps = 0;
    bool done = false;
    DoneReason reason = DoneReason::None;
    double distance_travelled = 0.0;
    std::uint64_t next_pedestrian_id = 0;
    Rng rng{0};
};

/// Minimum along-route distance from the ego front bumper to a pedestrian on
/// the road surface, ahead of the ego and inside its lane corridor.
inline std::optional<double> nearest_front_crossing_pedestrian(const EnvState& state, const MapSpec& map,
                                                                const EnvConfig& cfg) {
    std::optional<double> best;
    const double front = state.ego.arc + 0.5 * state.ego.length;
    for (const auto& p : state.pedestrians) {
        if (map.semantic(p.position) == RoadType::Sidewalk) continue;
        const auto proj = map.path().project(p.position, state.ego.arc, state.ego.arc + cfg.front_horizon);
        if (!(proj.distance <= 0.5 * map.lane_width)) continue;
        const double d = proj.arc - front;
        if (d <= 0.0) continue;
        if (!best || d < *best) best = d;
    }
    return best;
}

inline bool ego_in_intersection(const EgoState& ego, const MapSpec& map) {
    const OrientedRect fp = ego.footprint();
    return std::any_of(map.intersections.begin(), map.intersections.end(),
                       [&](const Box& b) { return fp.intersects(b); });
}

/// Urban micro-simulator: scripted-route ego with longitudinal control and
/// goal-seeking pedestrians around it.
class Environment {
public:
    Environment(EnvConfig cfg, std::shared_ptr<const MapSpec> map) : cfg_(cfg), map_(std::move(map)) {
        cfg_.validate();
        if (!map_ || !map_->finalized()) throw ConfigError("env: map is not finalized");
        reset(cfg_.seed);
    }

    const EnvState& reset(std::uint64_t seed) {
        state_ = EnvState{};
        state_.rng = Rng(seed);
        state_.ego.length = cfg_.ego_length;
        state_.ego.width = cfg_.ego_width;
        place_ego(0.0);
        for (std::size_t i = 0; i < cfg_.max_pedestrians; ++i) spawn_pedestrian();
        return state_;
    }

    StepOutcome step(Action action) {
        if (state_.done) throw ContractViolation("env: step called on a finished episode");
        StepOutcome out;
        EgoState& ego = state_.ego;
        ego.speed = std::clamp(ego.speed + acceleration(action) * cfg_.dt, 0.0, cfg_.v_hard_cap);
        const double before = ego.arc;
        place_ego(std::min(ego.arc + ego.speed * cfg_.dt, map_->path().length()));
        out.info.distance = ego.arc - before;
        state_.distance_travelled += out.info.distance;

        move_pedestrians();
        despawn_and_respawn();

        const OrientedRect fp = ego.footprint();
        const bool collided = std::any_of(state_.pedestrians.begin(), state_.pedestrians.end(),
                                          [&](const Pedestrian& p) { return fp.overlaps_disc(p.position, p.radius); });
        out.info.in_intersection = ego_in_intersection(ego, *map_);
        out.info.nearest_front_pedestrian = lexmorl::nearest_front_crossing_pedestrian(state_, *map_, cfg_);
        if (collided) {
            out.event = SafetyEvent::collision();
        } else if (out.info.nearest_front_pedestrian &&
                   *out.info.nearest_front_pedestrian <= dynamic_range(ego.speed, cfg_.safety)) {
            out.event = SafetyEvent::near_collision(*out.info.nearest_front_pedestrian);
        }

        ++state_.steps;
        if (collided) state_.reason = DoneReason::Collision;
        else if (ego.arc >= map_->path().length()) state_.reason = DoneReason::Goal;
        else if (state_.steps >= cfg_.step_cap) state_.reason = DoneReason::StepCap;
        state_.done = state_.reason != DoneReason::None;
        out.done = state_.done;
        out.reason = state_.reason;
        return out;
    }

    const EnvState& state() const { return state_; }
    /// Direct access for fixtures that stage pedestrians by hand.
    EnvState& mutable_state() { return state_; }
    const EnvConfig& config() const { return cfg_; }
    const MapSpec& map() const { return *map_; }
    std::shared_ptr<const MapSpec> map_ptr() const { return map_; }

    std::optional<double> nearest_front_crossing_pedestrian() const {
        return lexmorl::nearest_front_crossing_pedestrian(state_, *map_, cfg_);
    }

    /// Adds a pedestrian at a given spot; returns its id. Test fixtures only.
    std::uint64_t add_pedestrian(Vec2 position, Vec2 goal, double speed, bool crossing_allowed) {
        Pedestrian p;
        p.id = state_.next_pedestrian_id++;
        p.position = position;
        p.goal = goal;
        p.speed = speed;
        p.crossing_allowed = crossing_allowed;
        p.radius = cfg_.ped_radius;
        const Vec2 d = goal - position;
        p.heading = norm(d) > 0.0 ? std::atan2(d.y, d.x) : 0.0;
        state_.pedestrians.push_back(p);
        return p.id;
    }

private:
    void place_ego(double arc) {
        EgoState& ego = state_.ego;
        ego.arc = arc;
        ego.position = map_->path().point_at(arc);
        ego.heading = map_->path().heading_at(arc);
        ego.waypoint = map_->path().segment_at(arc);
    }

    double distance_to_ego(Vec2 p) const { return distance(p, state_.ego.position); }

    /// Uniform sample over sidewalk area inside the forward vicinity half-disc.
    std::optional<Vec2> sample_spawn_point() {
        const double r = cfg_.vicinity_radius;
        const Vec2 f = unit_from_angle(state_.ego.heading);
        const Vec2 l = left_normal(f);
        const OrientedRect fp = state_.ego.footprint();
        for (int attempt = 0; attempt < 256; ++attempt) {
            const double fwd = state_.rng.uniform(0.0, r);
            const double lat = state_.rng.uniform(-r, r);
            if (fwd * fwd + lat * lat > r * r) continue;
            const Vec2 p = state_.ego.position + fwd * f + lat * l;
            if (map_->sidewalk_at(p) < 0) continue;
            if (fp.clearance(p, cfg_.ped_radius) < cfg_.ped_yield_margin) continue;
            return p;
        }
        return std::nullopt;
    }

    Vec2 sample_in_strip(const Sidewalk& sw, double along_center, double along_spread) {
        const Box& b = sw.area;
        const double m = std::min(cfg_.ped_radius, 0.25 * std::min(b.width(), b.height()));
        const bool h = map_->roads[sw.road].horizontal();
        const double lo = h ? b.min.x + m : b.min.y + m;
        const double hi = h ? b.max.x - m : b.max.y - m;
        const double along = std::clamp(along_center + state_.rng.uniform(-along_spread, along_spread), lo, hi);
        const double cross_lo = h ? b.min.y + m : b.min.x + m;
        const double cross_hi = h ? b.max.y - m : b.max.x - m;
        const double across = state_.rng.uniform(cross_lo, cross_hi);
        return h ? Vec2{along, across} : Vec2{across, along};
    }

    int strip_near(Vec2 p) const {
        const int k = map_->sidewalk_at(p);
        if (k >= 0) return k;
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < map_->sidewalks().size(); ++i) {
            const double d = distance(p, map_->sidewalks()[i].area.clamp(p));
            if (d < best_d) { best_d = d; best = static_cast<int>(i); }
        }
        return best;
    }

    /// Crossing pedestrians cross once; every later leg stays on the sidewalk.
    void assign_goal(Pedestrian& p, Vec2 from, bool cross) {
        const int k = strip_near(from);
        if (k < 0) { p.goal = from; return; }
        const Sidewalk& sw = map_->sidewalks()[static_cast<std::size_t>(k)];
        const RoadSegment& road = map_->roads[sw.road];
        const bool h = road.horizontal();
        const double along = h ? from.x : from.y;
        if (cross && p.crossing_allowed) {
            for (int attempt = 0; attempt < 4; ++attempt) {
                const double shift = state_.rng.uniform(-5.0, 5.0);
                const Vec2 target = h ? Vec2{from.x + shift, 2.0 * road.from.y - from.y}
                                      : Vec2{2.0 * road.from.x - from.x, from.y + shift};
                const int opposite = map_->sidewalk_at(target);
                if (opposite >= 0) { p.goal = target; return; }
            }
        }
        p.goal = sample_in_strip(sw, along, 20.0);
    }

    void spawn_pedestrian() {
        const auto at = sample_spawn_point();
        if (!at) return;
        Pedestrian p;
        p.id = state_.next_pedestrian_id++;
        p.position = *at;
        p.radius = cfg_.ped_radius;
        p.speed = state_.rng.uniform(cfg_.ped_speed_min, cfg_.ped_speed_max);
        p.crossing_allowed = state_.rng.bernoulli(cfg_.crossing_factor);
        assign_goal(p, p.position, true);
        const Vec2 d = p.goal - p.position;
        p.heading = norm(d) > 0.0 ? std::atan2(d.y, d.x) : 0.0;
        state_.pedestrians.push_back(p);
    }

    /// Goal seeking with heading noise. A pedestrian whose step would bring it
    /// inside the yield margin of the ego (its footprint plus the lane strip
    /// ahead of it) tries headings turned progressively
    /// further from its goal direction (walking around the car) and waits
    /// only when none of them keeps its clearance.
    void move_pedestrians() {
        const EgoState& ego = state_.ego;
        const OrientedRect body = ego.footprint();
        // Lane strip ahead of the bumper: the near-collision range, or
        // `ped_yield_horizon` seconds of travel if that is longer.
        const double reach = std::max(ego.speed * cfg_.ped_yield_horizon, dynamic_range(ego.speed, cfg_.safety));
        const Vec2 heading = unit_from_angle(ego.heading);
        const OrientedRect ahead{ego.position + (0.5 * (ego.length + reach)) * heading, ego.heading, reach,
                                 std::max(ego.width, map_->lane_width)};
        const double sigma = cfg_.ped_heading_noise_deg * std::numbers::pi / 180.0;
        constexpr double kDetour[] = {0.0, 30.0, -30.0, 60.0, -60.0, 90.0, -90.0, 120.0, -120.0};
        for (auto& p : state_.pedestrians) {
            if (distance(p.position, p.goal) < 0.5) assign_goal(p, p.goal, false);
            const Vec2 to_goal = p.goal - p.position;
            const double dist = norm(to_goal);
            const Vec2 straight = dist > 0.0 ? to_goal * (1.0 / dist) : unit_from_angle(p.heading);
            const double noise = state_.rng.normal(0.0, sigma);
            // Clearance to each region may not shrink below the margin; a
            // pedestrian already inside the strip may only leave it.
            const double keep_body = std::min(cfg_.ped_yield_margin, body.clearance(p.position, p.radius));
            const double keep_ahead = std::min(cfg_.ped_yield_margin, ahead.clearance(p.position, p.radius));
            const bool on_sidewalk = map_->sidewalk_at(p.position) >= 0;
            std::optional<Vec2> chosen;
            for (double turn : kDetour) {
                Vec2 dir = rotate(straight, turn * std::numbers::pi / 180.0 + noise);
                Vec2 next = p.position + (p.speed * cfg_.dt) * dir;
                if (!p.crossing_allowed && on_sidewalk && map_->sidewalk_at(next) < 0) {
                    if (turn != 0.0) continue;
                    dir = straight;
                    next = p.position + (p.speed * cfg_.dt) * dir;
                }
                if (body.clearance(next, p.radius) >= keep_body && ahead.clearance(next, p.radius) >= keep_ahead) {
                    chosen = dir;
                    break;
                }
            }
            if (!chosen) {
                p.velocity = {0.0, 0.0};
                continue;
            }
            p.velocity = p.speed * *chosen;
            p.position = p.position + (p.speed * cfg_.dt) * *chosen;
            p.heading = std::atan2(chosen->y, chosen->x);
        }
    }

    void despawn_and_respawn() {
        auto& peds = state_.pedestrians;
        peds.erase(std::remove_if(peds.begin(), peds.end(),
                                  [&](const Pedestrian& p) { return distance_to_ego(p.position) > cfg_.despawn_radius; }),
                   peds.end());
        const std::size_t missing = cfg_.max_pedestrians > peds.size() ? cfg_.max_pedestrians - peds.size() : 0;
        for (std::size_t i = 0; i < missing; ++i) spawn_pedestrian();
    }

    EnvConfig cfg_;
    std::shared_ptr<const MapSpec> map_;
    EnvState state_;
};

}  // namespace lexmorl
