#include <gtest/gtest.h>

#include <lexmorl/morl.hpp>
#include <lexmorl/verify/oracles.hpp>

#include <cmath>
#include <limits>

using namespace lexmorl;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLow = -100.0;  // filler for unused action slots

ObjectiveChain chain_of(std::vector<double> taus, ThresholdMode mode = ThresholdMode::Literal,
                        std::vector<std::optional<double>> clamps = {}) {
    std::vector<Objective> objs;
    for (std::size_t i = 0; i < taus.size(); ++i)
        objs.push_back({"o" + std::to_string(i), taus[i], i < clamps.size() ? clamps[i] : std::nullopt});
    return ObjectiveChain(objs, mode);
}

ActionSet set_of(std::initializer_list<std::size_t> xs) {
    ActionSet s;
    for (auto x : xs) s.insert(x);
    return s;
}

}  // namespace

TEST(Action, AccelerationsAndIndexRoundTrip) {
    EXPECT_EQ(acceleration(Action::Accelerate), 1.0);
    EXPECT_EQ(acceleration(Action::Decelerate), -1.0);
    EXPECT_EQ(acceleration(Action::Brake), -5.0);
    EXPECT_EQ(acceleration(Action::Maintain), 0.0);
    ASSERT_EQ(kNumActions, 4u);
    for (std::size_t i = 0; i < kNumActions; ++i) {
        EXPECT_EQ(index_of(action_from_index(i)), i);
        EXPECT_EQ(action_from_name(name_of(action_from_index(i))), action_from_index(i));
    }
    EXPECT_FALSE(action_from_name("reverse"));
}

TEST(ClampThresholded, Examples) {
    EXPECT_EQ(clamp_thresholded(3.0, 5.0), 3.0);
    EXPECT_EQ(clamp_thresholded(7.0, 5.0), 5.0);
    EXPECT_EQ(clamp_thresholded(-4.0, 0.0), -4.0);
    EXPECT_EQ(clamp_thresholded(7.0, kInf), 7.0);
}

TEST(ClampThresholded, RejectsNonFinite) {
    EXPECT_THROW(clamp_thresholded(std::nan(""), 1.0), InvalidArgument);
    EXPECT_THROW(clamp_thresholded(kInf, 1.0), InvalidArgument);
    EXPECT_THROW(clamp_thresholded(1.0, std::nan("")), InvalidArgument);
}

TEST(Superior, Examples) {
    const std::vector<double> a{5, 3}, b{4, 10}, c{4, 9}, d{5, 0};
    EXPECT_TRUE(superior(a, b, 1));
    EXPECT_TRUE(superior(a, a, 1));
    EXPECT_FALSE(superior(c, d, 1));
}

TEST(Superior, EqualPrefixRecursesToLaterLevel) {
    const std::vector<double> a{2, 1, 7}, b{2, 1, 8};
    EXPECT_FALSE(superior(a, b, 1));
    EXPECT_TRUE(superior(b, a, 1));
    EXPECT_TRUE(superior(a, b, 3) == false);
}

TEST(Superior, RejectsBadArguments) {
    const std::vector<double> a{1, 2}, b{1};
    EXPECT_THROW(superior(a, b, 1), InvalidArgument);
    EXPECT_THROW(superior(a, a, 0), InvalidArgument);
    EXPECT_THROW(superior(a, a, 3), InvalidArgument);
    EXPECT_THROW(superior(std::vector<double>{}, std::vector<double>{}, 1), InvalidArgument);
}

TEST(Superior, MutualSuperiorityMeansEqual) {
    Rng rng(3);
    for (int k = 0; k < 2000; ++k) {
        std::vector<double> a(3), b(3);
        for (int i = 0; i < 3; ++i) {
            a[i] = static_cast<double>(rng.index(3));
            b[i] = static_cast<double>(rng.index(3));
        }
        if (superior(a, b) && superior(b, a)) {
            EXPECT_EQ(a, b);
        }
    }
}

TEST(TlqGreedy, SingleObjectiveIsArgmax) {
    EXPECT_EQ(index_of(tlq_greedy(QSnapshot({{1, 2, 3, 0}}), chain_of({1.0}))), 2u);
}

TEST(TlqGreedy, ClampTieBrokenByNextObjective) {
    const auto chain = chain_of({1.0, 1.0}, ThresholdMode::Literal, {4.0, std::nullopt});
    EXPECT_EQ(index_of(tlq_greedy(QSnapshot({{5, 5, kLow, kLow}, {1, 9, kLow, kLow}}), chain)), 1u);
    EXPECT_EQ(index_of(tlq_greedy(QSnapshot({{5, 3, kLow, kLow}, {0, 0, kLow, kLow}}), chain)), 0u);
}

TEST(TlqGreedy, MatchesBruteForceTournament) {
    Rng rng(11);
    for (int k = 0; k < 3000; ++k) {
        std::vector<QRow> rows(2);
        for (auto& r : rows)
            for (double& x : r) x = static_cast<double>(rng.index(5)) - 2.0;
        const double clamp = static_cast<double>(rng.index(5)) - 2.0;
        const auto chain = chain_of({1.0, 1.0}, ThresholdMode::Literal, {clamp, std::nullopt});
        // Oracle: first action whose clamped vector is lexicographically >= all others.
        std::size_t want = kNumActions;
        for (std::size_t a = 0; a < kNumActions && want == kNumActions; ++a) {
            bool best = true;
            for (std::size_t b = 0; b < kNumActions; ++b)
                best = best && verify::oracle_superior({rows[0][a], rows[1][a]}, {rows[0][b], rows[1][b]}, {clamp, kInf});
            if (best) want = a;
        }
        EXPECT_EQ(index_of(tlq_greedy(QSnapshot(rows), chain)), want);
    }
}

TEST(AcceptableActions, Examples) {
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {10, 9.6, 5, 9.4}, 0.95), set_of({0, 1}));
    EXPECT_EQ(acceptable_actions(set_of({0, 1}), {-0.1, -0.5, 0, 0}, 0.95), set_of({0}));
    EXPECT_EQ(acceptable_actions(set_of({2}), {1, 2, -3, 4}, 0.5), set_of({2}));
}

TEST(AcceptableActions, ExactBarIsAccepted) {
    // bar = 0.5 * 8 = 4 exactly; >= keeps action 1.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {8, 4, 3.999, 0}, 0.5), set_of({0, 1}));
    // Ties with the max survive tau = 1.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {3, 1, 3, 3}, 1.0), set_of({0, 2, 3}));
}

TEST(AcceptableActions, ArgmaxTieGoesToLowestIndex) {
    EXPECT_EQ(argmax_in(ActionSet::all(), {1, 7, 7, 2}), 1u);
    EXPECT_EQ(acceptable_actions(set_of({2, 3}), {9, 9, -1, -1}, 0.9), set_of({2}));
}

TEST(AcceptableActions, SlackModeIsSignIndependent) {
    // max = -2, bar = -2 - 0.1 * 2 = -2.2.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {-2, -2.1, -2.3, -5}, 0.9, ThresholdMode::Slack), set_of({0, 1}));
    // Same as literal for positive max: bar = 10 - 0.05 * 10 = 9.5.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {10, 9.6, 5, 9.4}, 0.95, ThresholdMode::Slack), set_of({0, 1}));
}

TEST(AcceptableActions, EmptyPrevRejected) {
    EXPECT_THROW(acceptable_actions(ActionSet{}, {1, 2, 3, 4}, 0.9), InvalidArgument);
}

TEST(AcceptableActions, TauLimits) {
    // tau = 1 with distinct positive values: singleton argmax.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {1, 4, 2, 3}, 1.0), set_of({1}));
    // tau -> 0 with positive values keeps everything.
    EXPECT_EQ(acceptable_actions(ActionSet::all(), {1, 4, 2, 3}, 1e-9), ActionSet::all());
}

TEST(TloSelect, Examples) {
    Rng rng(1);
    const auto two = chain_of({0.95, 1.0});
    const auto s = tlo_select(QSnapshot({{10, 9.6, 5, 9.4}, {1, 7, 9, 2}}), two, ExploreFlags(2), rng);
    EXPECT_EQ(index_of(s.action), 1u);
    ASSERT_EQ(s.trace.sets.size(), 3u);
    EXPECT_EQ(s.trace.sets[1], set_of({0, 1}));
    EXPECT_EQ(s.trace.sets[2], set_of({1}));
    EXPECT_FALSE(s.trace.explored);

    const auto one = tlo_select(QSnapshot({{1, 2, 0, 5}}), chain_of({1.0}), ExploreFlags(1), rng);
    EXPECT_EQ(index_of(one.action), 3u);
}

TEST(TloSelect, ExploringFirstObjectiveIsUniformOverAllActions) {
    const auto chain = chain_of({0.95, 1.0});
    const QSnapshot snap({{10, 9.6, 5, 9.4}, {1, 7, 9, 2}});
    std::array<int, kNumActions> counts{};
    Rng rng(5);
    for (int k = 0; k < 8000; ++k) {
        const auto s = tlo_select(snap, chain, ExploreFlags(2, 0), rng);
        ++counts[index_of(s.action)];
        EXPECT_EQ(s.trace.explored, 0u);
    }
    for (int c : counts) EXPECT_NEAR(c, 2000, 200);

    Rng r1(9), r2(9);
    for (int k = 0; k < 50; ++k)
        EXPECT_EQ(tlo_select(snap, chain, ExploreFlags(2, 0), r1).action, tlo_select(snap, chain, ExploreFlags(2, 0), r2).action);
}

TEST(TloSelect, ExploringSecondObjectiveStaysInFirstSet) {
    const auto chain = chain_of({0.95, 1.0});
    const QSnapshot snap({{10, 9.6, 5, 9.4}, {1, 7, 9, 2}});
    Rng rng(2);
    std::array<int, kNumActions> counts{};
    for (int k = 0; k < 2000; ++k) ++counts[index_of(tlo_select(snap, chain, ExploreFlags(2, 1), rng).action)];
    EXPECT_GT(counts[0], 800);
    EXPECT_GT(counts[1], 800);
    EXPECT_EQ(counts[2] + counts[3], 0);
}

TEST(TloSelect, RowCountMustMatchChain) {
    Rng rng(1);
    EXPECT_THROW(tlo_select(QSnapshot({{1, 2, 3, 4}}), chain_of({0.9, 1.0}), ExploreFlags(2), rng), InvalidArgument);
}

TEST(TloSelect, SetsNestedAndArgmaxRetained) {
    Rng gen(21), rng(22);
    for (int k = 0; k < 5000; ++k) {
        const std::size_t n = 1 + gen.index(3);
        std::vector<QRow> rows(n);
        for (auto& r : rows)
            for (double& x : r) x = gen.uniform(-5, 5);
        std::vector<double> taus;
        for (std::size_t i = 0; i < n; ++i) taus.push_back(gen.uniform(0.05, 1.0));
        const auto mode = gen.bernoulli(0.5) ? ThresholdMode::Literal : ThresholdMode::Slack;
        const auto s = tlo_select(QSnapshot(rows), chain_of(taus, mode), ExploreFlags(n), rng);
        ASSERT_TRUE(s.trace.nested());
        for (std::size_t i = 0; i < n; ++i) EXPECT_TRUE(s.trace.sets[i + 1].contains(argmax_in(s.trace.sets[i], rows[i])));
        EXPECT_TRUE(s.trace.sets.back().contains(s.action));
    }
}

TEST(TloSelect, PositiveRescalingLeavesChoiceUnchanged) {
    Rng gen(31), rng(0);
    for (int k = 0; k < 3000; ++k) {
        std::vector<QRow> rows(2);
        for (auto& r : rows)
            for (double& x : r) x = static_cast<double>(gen.index(9)) - 4.0;
        const double scale = gen.uniform(0.1, 10.0);
        auto scaled = rows;
        for (auto& r : scaled)
            for (double& x : r) x *= scale;
        const auto chain = chain_of({0.8, 1.0});
        EXPECT_EQ(tlo_select(QSnapshot(rows), chain, ExploreFlags(2), rng).action,
                  tlo_select(QSnapshot(scaled), chain, ExploreFlags(2), rng).action);
    }
}

TEST(TloSelect, MatchesOracleIncludingTies) {
    Rng gen(77);
    for (int k = 0; k < 4000; ++k) {
        const std::size_t n = 1 + gen.index(3);
        std::vector<QRow> rows(n);
        for (auto& r : rows)
            for (double& x : r) x = static_cast<double>(gen.index(5)) - 2.0;
        const std::vector<double> all_taus{0.5, 0.8, 0.95, 1.0};
        std::vector<double> taus;
        for (std::size_t i = 0; i < n; ++i) taus.push_back(all_taus[gen.index(4)]);
        const auto mode = gen.bernoulli(0.5) ? ThresholdMode::Literal : ThresholdMode::Slack;
        Rng rng(1);
        const auto got = tlo_select(QSnapshot(rows), chain_of(taus, mode), ExploreFlags(n), rng);
        const auto want = verify::oracle_tlo(rows, taus, mode, std::nullopt);
        ASSERT_EQ(got.trace.sets.size(), want.sets.size());
        for (std::size_t i = 0; i < want.sets.size(); ++i) EXPECT_EQ(got.trace.sets[i].mask(), want.sets[i]);
        EXPECT_EQ(index_of(got.action), want.action.value());
    }
}

TEST(ObjectiveChain, Validation) {
    EXPECT_THROW(ObjectiveChain({}), InvalidArgument);
    EXPECT_THROW(chain_of({0.0}), InvalidArgument);
    EXPECT_THROW(chain_of({1.5}), InvalidArgument);
    EXPECT_THROW(chain_of(std::vector<double>(9, 0.5)), InvalidArgument);
    EXPECT_NO_THROW(chain_of(std::vector<double>(8, 0.5)));
    EXPECT_EQ(chain_of({0.9, 1.0}).clamp_level(1), kInf);
}

TEST(QSnapshot, RejectsNonFinite) {
    EXPECT_THROW(QSnapshot({{1, std::nan(""), 0, 0}}), InvalidArgument);
    EXPECT_THROW(QSnapshot({{1, kInf, 0, 0}}), InvalidArgument);
}

TEST(ExploreFlags, AtMostOne) {
    EXPECT_THROW(ExploreFlags(2, 2), InvalidArgument);
    const ExploreFlags f(3, 1);
    EXPECT_EQ(f.explored(), 1u);
    EXPECT_FALSE(ExploreFlags(3).any());
}

TEST(SelectionTrace, JsonRoundTrip) {
    Rng rng(4);
    const auto s = tlo_select(QSnapshot({{10, 9.6, 5, 9.4}, {1, 7, 9, 2}}), chain_of({0.95, 1.0}), ExploreFlags(2, 1), rng);
    const nlohmann::json j = s.trace;
    const auto back = j.get<SelectionTrace>();
    EXPECT_EQ(back.q, s.trace.q);
    EXPECT_EQ(back.sets, s.trace.sets);
    EXPECT_EQ(back.explored, s.trace.explored);
    EXPECT_EQ(back.action, s.trace.action);
}

TEST(SelectionTrace, NestedDetectsCorruption) {
    SelectionTrace t;
    t.sets = {ActionSet::all(), set_of({0, 1}), set_of({1, 2})};
    EXPECT_FALSE(t.nested());
    t.sets = {ActionSet::all(), set_of({0, 1}), ActionSet{}};
    EXPECT_FALSE(t.nested());
    t.sets = {ActionSet::all(), set_of({0, 1}), set_of({1})};
    EXPECT_TRUE(t.nested());
}
