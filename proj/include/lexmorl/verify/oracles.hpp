#pragma once

// Independent reference implementations used by tests, selftest and the
// acceptance suite. They restate each definition as directly as possible and
// share no selection code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "../action.hpp"
#include "../ddqn.hpp"
#include "../morl.hpp"
#include "../qfunction.hpp"
#include "../random.hpp"
#include "../replay.hpp"

namespace lexmorl::verify {

using Subset = std::uint32_t;  ///< bit a set <=> action a present

inline bool in(Subset s, std::size_t a) { return (s >> a) & 1U; }

/// The acceptable set as the unique subset satisfying its defining predicate,
/// found by enumerating all 16 candidate subsets.
inline Subset oracle_acceptable(Subset prev, const QRow& q, double tau, ThresholdMode mode) {
    double best = -INFINITY;
    for (std::size_t a = 0; a < kNumActions; ++a)
        if (in(prev, a)) best = std::max(best, q[a]);
    std::size_t first_best = kNumActions;
    for (std::size_t a = kNumActions; a-- > 0;)
        if (in(prev, a) && q[a] == best) first_best = a;
    const double bar = mode == ThresholdMode::Literal ? tau * best : best - (1.0 - tau) * std::fabs(best);
    std::optional<Subset> found;
    for (Subset cand = 0; cand < (1U << kNumActions); ++cand) {
        bool ok = true;
        for (std::size_t a = 0; a < kNumActions && ok; ++a) {
            const bool should = in(prev, a) && (q[a] >= bar || a == first_best);
            ok = in(cand, a) == should;
        }
        if (ok) {
            if (found) return 0;  // not unique: impossible for a well-formed predicate
            found = cand;
        }
    }
    return found.value_or(0);
}

struct OracleSelection {
    std::vector<Subset> sets;          ///< A_0 .. A_k
    std::optional<std::size_t> explored;
    Subset candidates = 0;             ///< actions the result may be drawn from
    std::optional<std::size_t> action; ///< fixed result when not exploring
};

/// TLO selection by explicit set enumeration.
inline OracleSelection oracle_tlo(const std::vector<QRow>& q, const std::vector<double>& taus, ThresholdMode mode,
                                  std::optional<std::size_t> explore) {
    OracleSelection out;
    out.sets.push_back((1U << kNumActions) - 1);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const Subset prev = out.sets.back();
        out.sets.push_back(oracle_acceptable(prev, q[i], taus[i], mode));
        if (explore && *explore == i) {
            out.explored = i;
            out.candidates = prev;
            return out;
        }
    }
    const Subset last = out.sets.back();
    const QRow& row = q.back();
    for (std::size_t a = 0; a < kNumActions; ++a) {
        if (!in(last, a)) continue;
        bool dominant = true;
        for (std::size_t b = 0; b < kNumActions; ++b)
            if (in(last, b) && (row[b] > row[a] || (row[b] == row[a] && b < a))) dominant = false;
        if (dominant) out.action = a;
    }
    out.candidates = out.action ? (1U << *out.action) : 0;
    return out;
}

/// Superior restated as: the clamped vector of a is lexicographically >= that of b.
inline bool oracle_superior(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& clamp) {
    std::vector<double> ca(a.size()), cb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[i] = std::min(a[i], clamp[i]);
        cb[i] = std::min(b[i], clamp[i]);
    }
    return !std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
}

/// Deterministic chain: states 0..n-1, the last one terminal.
/// Accelerate moves right, Decelerate moves left (floored at 0), Brake and
/// Maintain stay. Entering the terminal state pays 1; staying costs `stay_cost`.
struct ChainMdp {
    std::size_t n = 5;
    double gamma = 0.9;
    double stay_cost = -0.1;

    struct Step {
        std::size_t next;
        double reward;
        bool done;
    };

    Step step(std::size_t s, std::size_t a) const {
        std::size_t next = s;
        if (a == index_of(Action::Accelerate)) next = s + 1;
        else if (a == index_of(Action::Decelerate)) next = s == 0 ? 0 : s - 1;
        const bool done = next == n - 1;
        const double r = done ? 1.0 : (next == s ? stay_cost : 0.0);
        return {next, r, done};
    }

    /// Q* by value iteration to machine precision. Row n-1 (terminal) stays zero.
    std::vector<QRow> optimal_q() const {
        std::vector<QRow> q(n, QRow{});
        for (int iter = 0; iter < 10000; ++iter) {
            double delta = 0.0;
            auto next_q = q;
            for (std::size_t s = 0; s + 1 < n; ++s)
                for (std::size_t a = 0; a < kNumActions; ++a) {
                    const Step t = step(s, a);
                    const double v = t.done ? 0.0 : *std::max_element(q[t.next].begin(), q[t.next].end());
                    next_q[s][a] = t.reward + gamma * v;
                    delta = std::max(delta, std::fabs(next_q[s][a] - q[s][a]));
                }
            q = next_q;
            if (delta < 1e-15) break;
        }
        return q;
    }
};

struct ChainTrainResult {
    double max_error = INFINITY;
    std::size_t updates = 0;
};

/// Trains a tabular DDQN on the chain from uniformly collected experience and
/// reports max |Q - Q*| over non-terminal states.
inline ChainTrainResult train_chain_ddqn(const ChainMdp& mdp, std::size_t updates, std::uint64_t seed,
                                         double learning_rate = 0.01, std::size_t target_sync = 200) {
    Rng rng(seed);
    TabularQ online(1, 0.5);
    auto target = online.clone();
    RmsPropState opt;
    opt.learning_rate = learning_rate;
    ReplayBuffer replay(10000);
    std::vector<ObservationPtr> obs;
    for (std::size_t s = 0; s < mdp.n; ++s)
        obs.push_back(std::make_shared<const std::vector<double>>(std::vector<double>{static_cast<double>(s)}));
    for (std::size_t i = 0; i < 2000; ++i) {
        const std::size_t s = rng.index(mdp.n - 1);
        const std::size_t a = rng.index(kNumActions);
        const auto t = mdp.step(s, a);
        replay.push({obs[s], a, t.reward, obs[t.next], t.done});
    }
    const auto q_star = mdp.optimal_q();
    ChainTrainResult res;
    for (std::size_t u = 0; u < updates; ++u) {
        train_step(online, replay.sample(32, rng), mdp.gamma, opt, *target);
        if ((u + 1) % target_sync == 0) sync_target(online, *target);
        res.updates = u + 1;
    }
    res.max_error = 0.0;
    for (std::size_t s = 0; s + 1 < mdp.n; ++s) {
        const QRow q = online.q_values(*obs[s]);
        for (std::size_t a = 0; a < kNumActions; ++a) res.max_error = std::max(res.max_error, std::fabs(q[a] - q_star[s][a]));
    }
    return res;
}

}  // namespace lexmorl::verify
