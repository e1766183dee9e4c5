#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../ddqn.hpp"
#include "../morl.hpp"
#include "../qfunction.hpp"
#include "../random.hpp"
#include "../rewards.hpp"
#include "oracles.hpp"

namespace lexmorl::verify {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct TloCheck {
    std::size_t cases = 0;
    std::size_t mismatches = 0;
    std::string first_mismatch;
};

/// Random Q value: half the tables use a coarse integer grid so ties and
/// exact threshold hits occur often; the rest are continuous. Mixed sign.
inline double random_q(Rng& rng, bool coarse) {
    return coarse ? static_cast<double>(static_cast<int>(rng.index(9)) - 4) : rng.uniform(-10.0, 10.0);
}

/// tlo_select against the enumeration oracle on seeded random tables.
inline TloCheck check_tlo_equivalence(std::size_t cases, std::uint64_t seed) {
    constexpr double kTaus[] = {0.5, 0.8, 0.95, 1.0};
    Rng gen(seed);
    TloCheck out;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 1 + gen.index(3);
        const bool coarse = gen.bernoulli(0.5);
        const ThresholdMode mode = gen.bernoulli(0.75) ? ThresholdMode::Literal : ThresholdMode::Slack;
        std::vector<QRow> rows(n);
        for (auto& r : rows)
            for (double& x : r) x = random_q(gen, coarse);
        std::vector<Objective> objs;
        std::vector<double> taus;
        for (std::size_t i = 0; i < n; ++i) {
            taus.push_back(kTaus[gen.index(std::size(kTaus))]);
            objs.push_back({"o" + std::to_string(i), taus.back(), std::nullopt});
        }
        std::optional<std::size_t> explore;
        if (gen.bernoulli(0.3)) explore = gen.index(n);
        const ObjectiveChain chain(objs, mode);
        const ExploreFlags flags = explore ? ExploreFlags(n, *explore) : ExploreFlags(n);

        Rng pick(Rng::mix(seed, c));
        Rng pick_copy = pick;
        const Selection sel = tlo_select(QSnapshot(rows), chain, flags, pick);
        const OracleSelection ref = oracle_tlo(rows, taus, mode, explore);

        bool ok = sel.trace.sets.size() == ref.sets.size() && sel.trace.explored == ref.explored;
        for (std::size_t i = 0; ok && i < ref.sets.size(); ++i) ok = sel.trace.sets[i].mask() == ref.sets[i];
        if (ok) {
            std::size_t expected;
            if (ref.explored) {
                std::vector<std::size_t> members;
                for (std::size_t a = 0; a < kNumActions; ++a)
                    if (in(ref.candidates, a)) members.push_back(a);
                expected = members[pick_copy.index(members.size())];
            } else {
                expected = ref.action.value_or(kNumActions);
            }
            ok = index_of(sel.action) == expected;
        }
        ++out.cases;
        if (!ok) {
            if (out.mismatches == 0) {
                std::ostringstream s;
                s << "case " << c << " (n=" << n << ", mode=" << (mode == ThresholdMode::Literal ? "literal" : "slack") << ")";
                out.first_mismatch = s.str();
            }
            ++out.mismatches;
        }
    }
    return out;
}

/// superior(a, b, 1) against clamped lexicographic comparison.
inline TloCheck check_superior_equivalence(std::size_t pairs, std::uint64_t seed) {
    Rng gen(seed);
    TloCheck out;
    for (std::size_t c = 0; c < pairs; ++c) {
        const std::size_t n = 1 + gen.index(4);
        const bool coarse = gen.bernoulli(0.6);
        std::vector<double> a(n), b(n), clamp(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = random_q(gen, coarse);
            b[i] = gen.bernoulli(0.3) ? a[i] : random_q(gen, coarse);
            clamp[i] = gen.bernoulli(0.5) ? INFINITY : random_q(gen, true);
        }
        std::vector<double> ta(n), tb(n);
        for (std::size_t i = 0; i < n; ++i) {
            ta[i] = clamp_thresholded(a[i], clamp[i]);
            tb[i] = clamp_thresholded(b[i], clamp[i]);
        }
        const bool got = superior(ta, tb, 1);
        const bool want = oracle_superior(a, b, clamp);
        ++out.cases;
        if (got != want) {
            if (out.mismatches == 0) out.first_mismatch = "pair " + std::to_string(c);
            ++out.mismatches;
        }
    }
    return out;
}

struct RewardCase {
    std::string what;
    double got;
    double want;
};

/// Hand-computed reward values.
inline std::vector<RewardCase> reward_cases() {
    const SafetyParams lit{};
    SafetyParams prox{};
    prox.shape = PenaltyShape::ProximityIncreasing;
    const double e_inv = std::exp(-1.0);
    const RewardConfig rc{};
    return {
        {"dynamic_range(8)", dynamic_range(8.0, lit), 6.4},
        {"dynamic_range(0)", dynamic_range(0.0, lit), 2.0},
        {"dynamic_range(4)", dynamic_range(4.0, lit), 2.0},
        {"r_nc(d_p=d_r)", near_collision_penalty(6.4, 6.4, lit), -1.0},
        {"r_nc(d_p->0, d_r=6.4)", near_collision_penalty(1e-12, 6.4, lit), -e_inv},
        {"r_nc proximity(d_p=d_r)", near_collision_penalty(6.4, 6.4, prox), -e_inv},
        {"r_safety(collision)", safety_reward(SafetyEvent::collision(), 8.0, lit), -4.0},
        {"r_safety(clear)", safety_reward(SafetyEvent::clear(), 8.0, lit), 0.0},
        {"r_safety(near 6.4 @ 8)", safety_reward(SafetyEvent::near_collision(6.4), 8.0, lit), -1.0},
        {"r_speed(8, 8)", speed_reward(8.0, 8.0), 0.0},
        {"r_speed(0, 8)", speed_reward(0.0, 8.0), -1.0},
        {"r_speed(4, 8)", speed_reward(4.0, 8.0), 0.5},
        {"r_speed(9, 8)", speed_reward(9.0, 8.0), -0.5},
        {"R(collision, 8).safety", reward_vector(SafetyEvent::collision(), 8.0, rc).safety, -4.0},
        {"R(collision, 8).speed", reward_vector(SafetyEvent::collision(), 8.0, rc).speed, 0.0},
        {"R(clear, 0).speed", reward_vector(SafetyEvent::clear(), 0.0, rc).speed, -1.0},
        {"scalarize([-1, 0.5])", scalarize({-1.0, 0.5}), -0.5},
        {"scalarize([-4, 0])", scalarize({-4.0, 0.0}), -4.0},
    };
}

struct GradientCheck {
    double mlp_max = 0.0;
    double cnn_max = 0.0;
    std::size_t fixtures = 0;
};

/// Analytic vs finite-difference gradients on random fixtures of both networks.
inline GradientCheck check_gradients(std::size_t fixtures, std::uint64_t seed, std::size_t rows = 40, std::size_t cols = 30) {
    Rng rng(seed);
    GradientCheck out;
    for (std::size_t f = 0; f < fixtures; ++f) {
        MlpQ mlp(1, {32, 32}, Rng::mix(seed, 2 * f), {1.0 / 8.0});
        const std::vector<double> ego{rng.uniform(0.0, 12.0)};
        const Action mlp_action = action_from_index(rng.index(kNumActions));
        const double mlp_target = rng.uniform(-3.0, 3.0);
        const auto gm = grad_check(mlp, ego, mlp_action, mlp_target, rng);
        out.mlp_max = std::max(out.mlp_max, gm.max_relative_error);

        CnnQ::Config cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.extra_inputs = f % 2;
        cfg.input_scale = {1.0, 0.1, 1.0 / 180.0, 1.0 / 3.0};
        if (cfg.extra_inputs) cfg.extra_scale = {1.0 / 8.0};
        CnnQ cnn(cfg, Rng::mix(seed, 2 * f + 1));
        std::vector<double> obs(cnn.input_size());
        for (std::size_t i = 0; i < cfg.rows * cfg.cols; ++i) {
            const bool occupied = rng.bernoulli(0.1);
            obs[4 * i + 0] = occupied ? 1.0 : 0.0;
            obs[4 * i + 1] = occupied ? rng.uniform(-2.0, 10.0) : 0.0;
            obs[4 * i + 2] = occupied ? rng.uniform(-180.0, 180.0) : 0.0;
            obs[4 * i + 3] = static_cast<double>(rng.index(4));
        }
        if (cfg.extra_inputs) obs.back() = rng.uniform(0.0, 10.0);
        const Action cnn_action = action_from_index(rng.index(kNumActions));
        const double cnn_target = rng.uniform(-3.0, 3.0);
        const auto gc = grad_check(cnn, obs, cnn_action, cnn_target, rng);
        out.cnn_max = std::max(out.cnn_max, gc.max_relative_error);
        ++out.fixtures;
    }
    return out;
}

struct SelftestOptions {
    bool fast = false;
    std::uint64_t seed = 1;
};

inline std::vector<SuiteResult> run_selftest(const SelftestOptions& opt) {
    std::vector<SuiteResult> out;
    {
        const auto r = check_tlo_equivalence(10000, Rng::mix(opt.seed, 1));
        out.push_back({"tlo-oracle", r.mismatches == 0,
                       std::to_string(r.mismatches) + " mismatches / " + std::to_string(r.cases) +
                           (r.first_mismatch.empty() ? "" : "; first: " + r.first_mismatch)});
    }
    {
        const auto r = check_superior_equivalence(10000, Rng::mix(opt.seed, 2));
        out.push_back({"superior-oracle", r.mismatches == 0,
                       std::to_string(r.mismatches) + " mismatches / " + std::to_string(r.cases)});
    }
    {
        std::size_t bad = 0;
        std::string first;
        const auto cases = reward_cases();
        for (const auto& c : cases)
            if (!(std::fabs(c.got - c.want) <= 1e-9)) {
                if (bad++ == 0) first = c.what;
            }
        out.push_back({"reward-values", bad == 0,
                       std::to_string(cases.size() - bad) + "/" + std::to_string(cases.size()) + " match" +
                           (first.empty() ? "" : "; first failure: " + first)});
    }
    {
        const auto g = check_gradients(opt.fast ? 4 : 50, Rng::mix(opt.seed, 3), opt.fast ? 12 : 40, opt.fast ? 9 : 30);
        std::ostringstream s;
        s << "mlp " << g.mlp_max << ", cnn " << g.cnn_max << " over " << g.fixtures << " fixtures";
        out.push_back({"gradients", g.mlp_max < 1e-6 && g.cnn_max < 1e-5, s.str()});
    }
    if (!opt.fast) {
        const auto r = train_chain_ddqn(ChainMdp{}, 50000, Rng::mix(opt.seed, 4));
        std::ostringstream s;
        s << "max |Q - Q*| = " << r.max_error << " after " << r.updates << " updates";
        out.push_back({"chain-convergence", r.max_error < 0.05, s.str()});
    }
    return out;
}

}  // namespace lexmorl::verify
