#include <gtest/gtest.h>

#include <lexmorl/env.hpp>
#include <lexmorl/map.hpp>
#include <lexmorl/observe.hpp>

#include <memory>

using namespace lexmorl;

namespace {

struct Fixture {
    MapSpec map = training_map();
    EnvState state;
    GridSpec grid;

    Fixture() {
        state.ego.position = map.route[0];
        state.ego.heading = 0.0;
        state.ego.speed = 5.0;
    }

    void add(Vec2 local, Vec2 velocity, double heading) {
        Pedestrian p;
        p.id = state.pedestrians.size();
        p.position = state.ego.position + local;
        p.velocity = velocity;
        p.heading = heading;
        state.pedestrians.push_back(p);
    }
};

}  // namespace

TEST(Grid, CellIndexing) {
    const GridSpec g;
    std::size_t r = 99, c = 99;
    ASSERT_TRUE(grid_cell_of(g, {0.0, 0.0}, r, c));
    EXPECT_EQ(r, 10u);  // 5 m of rear context at 0.5 m per cell
    EXPECT_EQ(c, 15u);
    ASSERT_TRUE(grid_cell_of(g, {-5.0, -7.5}, r, c));
    EXPECT_EQ(r, 0u);
    EXPECT_EQ(c, 0u);
    ASSERT_TRUE(grid_cell_of(g, {14.99, 7.49}, r, c));
    EXPECT_EQ(r, 39u);
    EXPECT_EQ(c, 29u);
    EXPECT_FALSE(grid_cell_of(g, {15.0, 0.0}, r, c));
    EXPECT_FALSE(grid_cell_of(g, {-5.01, 0.0}, r, c));
    EXPECT_FALSE(grid_cell_of(g, {0.0, 7.5}, r, c));
}

TEST(Grid, ShapeAndSemantics) {
    Fixture f;
    const auto obs = encode_grid(f.state, f.map, f.grid);
    EXPECT_EQ(obs.data.size(), 40u * 30u * 4u);
    EXPECT_EQ(obs.at(10, 15, kSemantic), static_cast<double>(RoadType::Road));
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 30; ++c) {
            EXPECT_EQ(obs.at(r, c, kOccupancy), 0.0);
            const double s = obs.at(r, c, kSemantic);
            EXPECT_GE(s, 0.0);
            EXPECT_LE(s, 3.0);
        }
}

TEST(Grid, PedestrianAheadEncoded) {
    Fixture f;
    f.add({3.0, 0.2}, {0.0, 1.2}, std::numbers::pi / 2);
    const auto obs = encode_grid(f.state, f.map, f.grid);
    EXPECT_EQ(obs.at(16, 15, kOccupancy), 1.0);
    EXPECT_DOUBLE_EQ(obs.at(16, 15, kRelativeSpeed), 5.0);
    EXPECT_NEAR(obs.at(16, 15, kRelativeHeading), 90.0, 1e-9);
    double occupied = 0.0;
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 30; ++c) occupied += obs.at(r, c, kOccupancy);
    EXPECT_EQ(occupied, 1.0);
}

TEST(Grid, ClosingSpeedAndWrappedHeading) {
    Fixture f;
    f.add({4.0, -1.0}, {-1.0, 0.0}, std::numbers::pi);
    const auto obs = encode_grid(f.state, f.map, f.grid);
    std::size_t r = 0, c = 0;
    ASSERT_TRUE(grid_cell_of(f.grid, {4.0, -1.0}, r, c));
    EXPECT_DOUBLE_EQ(obs.at(r, c, kRelativeSpeed), 6.0);
    EXPECT_NEAR(obs.at(r, c, kRelativeHeading), -180.0, 1e-9);
}

TEST(Grid, OutsideRoiIgnored) {
    Fixture f;
    f.add({16.0, 0.0}, {0.0, 1.0}, 0.0);
    f.add({-6.0, 0.0}, {0.0, 1.0}, 0.0);
    f.add({0.0, 8.0}, {0.0, 1.0}, 0.0);
    const auto obs = encode_grid(f.state, f.map, f.grid);
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 30; ++c) EXPECT_EQ(obs.at(r, c, kOccupancy), 0.0);
}

TEST(Grid, SharedCellKeepsNearest) {
    Fixture f;
    f.add({3.4, 0.1}, {0.0, 1.0}, 0.5);
    f.add({3.1, 0.1}, {0.0, -1.0}, -0.5);
    f.add({3.3, 0.2}, {0.0, 1.0}, 1.0);
    const auto obs = encode_grid(f.state, f.map, f.grid);
    EXPECT_EQ(obs.at(16, 15, kOccupancy), 1.0);
    EXPECT_NEAR(obs.at(16, 15, kRelativeHeading), -0.5 * 180.0 / std::numbers::pi, 1e-9);
}

TEST(Grid, RotatesWithEgo) {
    Fixture f;
    f.state.ego.heading = std::numbers::pi / 2;  // facing +y
    f.add({-0.1, 3.0}, {0.0, 0.0}, std::numbers::pi / 2);
    const auto obs = encode_grid(f.state, f.map, f.grid);
    EXPECT_EQ(obs.at(16, 15, kOccupancy), 1.0);
    EXPECT_NEAR(obs.at(16, 15, kRelativeHeading), 0.0, 1e-9);
}

TEST(Grid, InvalidSpecRejected) {
    Fixture f;
    f.grid.rows = 0;
    EXPECT_THROW(encode_grid(f.state, f.map, f.grid), InvalidArgument);
    f.grid = {};
    f.grid.rear_fraction = 1.0;
    EXPECT_THROW(encode_grid(f.state, f.map, f.grid), InvalidArgument);
}

TEST(Ego, SpeedOnly) {
    Fixture f;
    EXPECT_EQ(encode_ego(f.state).speed, 5.0);
}

TEST(Grid, MatchesLiveEnvironment) {
    Environment env(EnvConfig{}, std::make_shared<const MapSpec>(training_map()));
    env.reset(3);
    for (int k = 0; k < 40; ++k) env.step(Action::Accelerate);
    const auto obs = encode_grid(env.state(), training_map(), GridSpec{});
    std::size_t inside = 0;
    const OrientedRect frame{env.state().ego.position, env.state().ego.heading, 0.0, 0.0};
    for (const auto& p : env.state().pedestrians) {
        std::size_t r = 0, c = 0;
        if (grid_cell_of(GridSpec{}, frame.to_local(p.position), r, c)) {
            ++inside;
            EXPECT_EQ(obs.at(r, c, kOccupancy), 1.0);
        }
    }
    double occupied = 0.0;
    for (std::size_t i = 0; i < obs.data.size(); i += 4) occupied += obs.data[i];
    EXPECT_LE(occupied, static_cast<double>(inside));
}
