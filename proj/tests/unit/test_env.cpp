#include <gtest/gtest.h>

#include <lexmorl/env.hpp>
#include <lexmorl/map.hpp>

#include <cmath>
#include <memory>

using namespace lexmorl;

namespace {

std::shared_ptr<const MapSpec> train_map() {
    static const auto m = std::make_shared<const MapSpec>(training_map());
    return m;
}

Environment empty_env() {
    Environment env(EnvConfig{}, train_map());
    env.mutable_state().pedestrians.clear();
    return env;
}

bool same_state(const EnvState& a, const EnvState& b) {
    if (a.pedestrians.size() != b.pedestrians.size()) return false;
    for (std::size_t i = 0; i < a.pedestrians.size(); ++i) {
        const auto &p = a.pedestrians[i], &q = b.pedestrians[i];
        if (p.id != q.id || p.position.x != q.position.x || p.position.y != q.position.y || p.goal.x != q.goal.x ||
            p.goal.y != q.goal.y || p.speed != q.speed || p.crossing_allowed != q.crossing_allowed)
            return false;
    }
    return a.ego.position.x == b.ego.position.x && a.ego.position.y == b.ego.position.y && a.ego.speed == b.ego.speed &&
           a.steps == b.steps && a.done == b.done;
}

}  // namespace

TEST(Maps, BuiltinsAreValid) {
    for (const char* name : {"train", "heldout1", "heldout2"}) {
        const MapSpec m = builtin_map(name);
        EXPECT_TRUE(m.finalized());
        EXPECT_EQ(m.name, name);
        EXPECT_EQ(m.goal().x, m.route.back().x);
        for (Vec2 w : m.route) EXPECT_TRUE(m.on_road(w));
        EXPECT_FALSE(m.crosswalks.empty());
        EXPECT_FALSE(m.sidewalks().empty());
        EXPECT_GT(m.path().length(), 50.0);
    }
    EXPECT_THROW(builtin_map("town01"), ConfigError);
}

TEST(Maps, JsonRoundTrip) {
    const MapSpec m = heldout_multi_intersection_map();
    const MapSpec back = map_from_json(map_to_json(m));
    EXPECT_EQ(map_to_json(back), map_to_json(m));
    EXPECT_DOUBLE_EQ(back.path().length(), m.path().length());
}

TEST(Maps, MalformedMapsRejected) {
    auto j = map_to_json(training_map());
    auto off_road = j;
    off_road["route"] = {{-20, -30}, {0, -30}};
    EXPECT_THROW(map_from_json(off_road), ConfigError);
    auto diagonal = j;
    diagonal["roads"] = {{{"from", {0, 0}}, {"to", {10, 10}}}};
    EXPECT_THROW(map_from_json(diagonal), ConfigError);
    auto missing = j;
    missing.erase("route");
    EXPECT_THROW(map_from_json(missing), ConfigError);
    auto short_route = j;
    short_route["route"] = {{-20, -1.75}};
    EXPECT_THROW(map_from_json(short_route), ConfigError);
}

TEST(Env, ResetPlacesEgoAtStartStanding) {
    Environment env(EnvConfig{}, train_map());
    const auto& s = env.reset(1);
    EXPECT_EQ(s.ego.speed, 0.0);
    EXPECT_EQ(s.ego.waypoint, 0u);
    EXPECT_EQ(s.ego.arc, 0.0);
    EXPECT_DOUBLE_EQ(s.ego.position.x, train_map()->route[0].x);
    EXPECT_DOUBLE_EQ(s.ego.position.y, train_map()->route[0].y);
    EXPECT_FALSE(s.done);
    EXPECT_GT(s.pedestrians.size(), 0u);
    EXPECT_LE(s.pedestrians.size(), 30u);
}

TEST(Env, ResetIsDeterministic) {
    Environment a(EnvConfig{}, train_map()), b(EnvConfig{}, train_map());
    a.reset(1);
    b.reset(1);
    EXPECT_TRUE(same_state(a.state(), b.state()));
    b.reset(2);
    EXPECT_FALSE(same_state(a.state(), b.state()));
}

TEST(Env, CrossingFactorZeroMeansNoCrossers) {
    EnvConfig cfg;
    cfg.crossing_factor = 0.0;
    Environment env(cfg, train_map());
    for (std::uint64_t seed : {1, 2, 3, 99}) {
        env.reset(seed);
        for (const auto& p : env.state().pedestrians) EXPECT_FALSE(p.crossing_allowed);
    }
}

TEST(Env, NonCrossersStayOnSidewalks) {
    EnvConfig cfg;
    cfg.crossing_factor = 0.0;
    Environment env(cfg, train_map());
    env.reset(4);
    for (int k = 0; k < 600 && !env.state().done; ++k) {
        env.step(k % 3 == 0 ? Action::Accelerate : Action::Maintain);
        for (const auto& p : env.state().pedestrians) EXPECT_GE(train_map()->sidewalk_at(p.position), 0);
    }
}

TEST(Env, BrakeClampsAtZero) {
    Environment env = empty_env();
    env.mutable_state().ego.speed = 0.3;
    env.step(Action::Brake);
    EXPECT_EQ(env.state().ego.speed, 0.0);
}

TEST(Env, AccelerateAboveReference) {
    Environment env = empty_env();
    env.mutable_state().ego.speed = 8.0;
    env.step(Action::Accelerate);
    EXPECT_NEAR(env.state().ego.speed, 8.1, 1e-12);
}

TEST(Env, HardCapClamps) {
    Environment env = empty_env();
    env.mutable_state().ego.speed = 14.95;
    env.step(Action::Accelerate);
    EXPECT_EQ(env.state().ego.speed, 15.0);
}

TEST(Env, PedestrianOnFootprintCollides) {
    Environment env = empty_env();
    const Vec2 at = env.state().ego.position;
    env.add_pedestrian(at, at + Vec2{0.0, 0.1}, 0.4, true);
    const auto out = env.step(Action::Maintain);
    EXPECT_EQ(out.event.kind, SafetyEvent::Kind::Collision);
    EXPECT_TRUE(out.done);
    EXPECT_EQ(out.reason, DoneReason::Collision);
    EXPECT_THROW(env.step(Action::Maintain), ContractViolation);
}

TEST(Env, NearestFrontPedestrian) {
    Environment env = empty_env();
    EXPECT_FALSE(env.nearest_front_crossing_pedestrian());
    const auto& ego = env.state().ego;
    const double front = ego.position.x + 0.5 * ego.length;
    env.add_pedestrian({front + 3.0, ego.position.y}, {front + 3.0, ego.position.y + 5.0}, 0.5, true);
    ASSERT_TRUE(env.nearest_front_crossing_pedestrian());
    EXPECT_NEAR(*env.nearest_front_crossing_pedestrian(), 3.0, 1e-9);

    Environment behind = empty_env();
    behind.add_pedestrian({ego.position.x - 6.0, ego.position.y}, {ego.position.x - 6.0, 5.0}, 0.5, true);
    EXPECT_FALSE(behind.nearest_front_crossing_pedestrian());

    Environment other_lane = empty_env();
    other_lane.add_pedestrian({front + 3.0, -ego.position.y}, {front + 3.0, 5.0}, 0.5, true);
    EXPECT_FALSE(other_lane.nearest_front_crossing_pedestrian());
}

TEST(Env, NearCollisionWithinDynamicRange) {
    Environment env = empty_env();
    const auto& ego = env.state().ego;
    const double front = ego.position.x + 0.5 * ego.length;
    // Standing still: range is d_0 = 2 m; the pedestrian walks away across the lane.
    env.add_pedestrian({front + 1.5, ego.position.y}, {front + 1.5, ego.position.y - 20.0}, 0.4, true);
    const auto out = env.step(Action::Maintain);
    ASSERT_EQ(out.event.kind, SafetyEvent::Kind::NearCollision);
    EXPECT_NEAR(out.event.distance, 1.5, 0.05);
    ASSERT_TRUE(out.info.nearest_front_pedestrian);
    EXPECT_DOUBLE_EQ(*out.info.nearest_front_pedestrian, out.event.distance);
}

TEST(Env, ReachingGoalEndsEpisode) {
    Environment env = empty_env();
    EnvState& s = env.mutable_state();
    s.ego.speed = 8.0;
    s.rng = Rng(1);
    const double len = train_map()->path().length();
    // Jump close to the goal; pedestrians were cleared and respawn behind the route end.
    s.ego.arc = len - 0.5;
    s.pedestrians.clear();
    StepOutcome out;
    for (int k = 0; k < 5 && !env.state().done; ++k) {
        env.mutable_state().pedestrians.clear();
        out = env.step(Action::Maintain);
    }
    EXPECT_TRUE(out.done);
    EXPECT_EQ(out.reason, DoneReason::Goal);
    EXPECT_DOUBLE_EQ(env.state().ego.arc, len);
}

TEST(Env, StepCapEndsEpisode) {
    EnvConfig cfg;
    cfg.step_cap = 25;
    Environment env(cfg, train_map());
    StepOutcome out;
    for (int k = 0; k < 25; ++k) out = env.step(Action::Brake);
    EXPECT_TRUE(out.done);
    EXPECT_EQ(out.reason, DoneReason::StepCap);
}

TEST(Env, TrajectoryDeterministicForSeedAndActions) {
    Environment a(EnvConfig{}, train_map()), b(EnvConfig{}, train_map());
    a.reset(17);
    b.reset(17);
    Rng pick(5);
    while (!a.state().done) {
        const Action act = action_from_index(pick.index(kNumActions));
        const auto oa = a.step(act);
        const auto ob = b.step(act);
        ASSERT_EQ(oa.event, ob.event);
        ASSERT_EQ(oa.reason, ob.reason);
        ASSERT_TRUE(same_state(a.state(), b.state()));
    }
}

TEST(Env, InvariantsUnderRandomDriving) {
    EnvConfig cfg;
    Environment env(cfg, train_map());
    Rng pick(8);
    std::size_t episodes = 0;
    for (int k = 0; k < 20000; ++k) {
        if (env.state().done) {
            env.reset(1000 + ++episodes);
        }
        const double v0 = env.state().ego.speed;
        const double arc0 = env.state().ego.arc;
        const Action act = action_from_index(pick.index(3) == 0 ? 0 : pick.index(kNumActions));
        const auto out = env.step(act);
        const auto& s = env.state();
        const double expect_v = std::clamp(v0 + acceleration(act) * cfg.dt, 0.0, cfg.v_hard_cap);
        ASSERT_DOUBLE_EQ(s.ego.speed, expect_v);
        ASSERT_NEAR(out.info.distance, s.ego.arc - arc0, 1e-9);
        ASSERT_NEAR(s.distance_travelled, s.ego.arc, 1e-9);
        ASSERT_LE(s.pedestrians.size(), cfg.max_pedestrians);
        bool overlap = false;
        for (const auto& p : s.pedestrians) {
            ASSERT_LE(distance(p.position, s.ego.position), cfg.despawn_radius);
            const double sp = norm(p.velocity);
            if (sp > 0.0) {
                ASSERT_GE(sp, cfg.ped_speed_min - 1e-9);
                ASSERT_LE(sp, cfg.ped_speed_max + 1e-9);
            }
            overlap = overlap || s.ego.footprint().overlaps_disc(p.position, p.radius);
        }
        ASSERT_EQ(overlap, out.event.kind == SafetyEvent::Kind::Collision);
        ASSERT_EQ(out.done, out.reason != DoneReason::None);
        ASSERT_EQ(out.reason == DoneReason::Collision, out.event.kind == SafetyEvent::Kind::Collision);
    }
}

TEST(EnvConfig, Validation) {
    EnvConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.despawn_radius = 30.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.crossing_factor = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}
