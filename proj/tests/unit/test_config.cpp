#include <gtest/gtest.h>

#include <lexmorl/config.hpp>

#include <filesystem>
#include <fstream>

using namespace lexmorl;

namespace {

std::string data(const char* name) { return std::string(LEXMORL_TEST_DATA) + "/" + name; }

}  // namespace

TEST(Config, DefaultsAreValid) {
    const RunConfig c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.map, "train");
    EXPECT_EQ(c.grid.rows, 40u);
    EXPECT_EQ(c.train.total_steps, 50000u);
    EXPECT_EQ(c.threshold.safety, 0.9);
    EXPECT_EQ(c.threshold.speed, 1.0);
    EXPECT_EQ(c.reward.safety.collision_penalty, -4.0);
}

TEST(Config, ShippedConfigsLoad) {
    const RunConfig smoke = load_config(data("smoke.json"));
    EXPECT_EQ(smoke.train.total_steps, 2000u);
    EXPECT_EQ(smoke.threshold.mode, ThresholdMode::Slack);
    const RunConfig desk = load_config(data("desk.json"));
    EXPECT_EQ(desk.train.total_steps, 50000u);
    EXPECT_EQ(desk.grid.rows, 40u);
    EXPECT_EQ(desk.grid.cols, 30u);
    const RunConfig full = load_config(data("full.json"));
    EXPECT_EQ(full.train.total_steps, 500000u);
    EXPECT_EQ(full.grid.rows, 80u);
    EXPECT_EQ(full.reward.safety.shape, PenaltyShape::LiteralNegated);
}

TEST(Config, JsonRoundTrip) {
    const RunConfig c = load_config(data("desk.json"));
    const nlohmann::json j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, OverridesPropagate) {
    nlohmann::json j = {{"environment", {{"v_ref", 6.0}}}, {"reward", {{"collision_penalty", -10.0}}}};
    const RunConfig c = config_from_json(j);
    EXPECT_EQ(c.reward.v_ref, 6.0);
    EXPECT_EQ(c.env.safety.collision_penalty, -10.0);
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(config_from_json({{"trainig", nlohmann::json::object()}}), ConfigError);
    EXPECT_THROW(config_from_json({{"training", {{"batch", 8}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"training", {{"total_steps", "many"}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"training", {{"gamma", 1.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"threshold", {{"mode", "fuzzy"}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"threshold", {{"safety", 0.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"threshold", {{"speed", 1.1}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"training", {{"eps_speed", {{"start", 0.1}, {"end", 0.5}}}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"environment", {{"grid", {{"cell", 0.0}}}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"reward", {{"collision_penalty", 1.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, FileErrors) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "lexmorl_bad_config.json";
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_config(path.string()), ConfigError);
    std::filesystem::remove(path);
}

TEST(EpsilonSchedule, LinearThenConstant) {
    const EpsilonSchedule s{0.9, 0.3, 100};
    EXPECT_DOUBLE_EQ(s.value(0), 0.9);
    EXPECT_DOUBLE_EQ(s.value(50), 0.6);
    EXPECT_DOUBLE_EQ(s.value(100), 0.3);
    EXPECT_DOUBLE_EQ(s.value(1000), 0.3);
    EXPECT_THROW(EpsilonSchedule({0.9, 0.3, 0}).validate("x"), ConfigError);
}
