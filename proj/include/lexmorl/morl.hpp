#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "action.hpp"
#include "errors.hpp"
#include "random.hpp"

// Thresholded lexicographic action selection.

namespace lexmorl {

/// Subset of the action space as a bitmask over dense action indices.
class ActionSet {
public:
    constexpr ActionSet() = default;
    constexpr explicit ActionSet(std::uint32_t mask) : mask_(mask & kFull) {}

    static constexpr ActionSet all() { return ActionSet(kFull); }
    static constexpr ActionSet single(std::size_t i) { return ActionSet(1u << i); }

    constexpr bool contains(std::size_t i) const { return i < kNumActions && ((mask_ >> i) & 1u) != 0; }
    constexpr bool contains(Action a) const { return contains(index_of(a)); }
    constexpr void insert(std::size_t i) { mask_ |= (1u << i) & kFull; }
    constexpr bool empty() const { return mask_ == 0; }
    constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(mask_)); }
    constexpr std::uint32_t mask() const { return mask_; }
    constexpr bool subset_of(ActionSet other) const { return (mask_ & ~other.mask_) == 0; }

    std::vector<std::size_t> members() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < kNumActions; ++i)
            if (contains(i)) out.push_back(i);
        return out;
    }

    friend constexpr bool operator==(ActionSet, ActionSet) = default;

private:
    static constexpr std::uint32_t kFull = (1u << kNumActions) - 1u;
    std::uint32_t mask_ = 0;
};

/// How a percentage threshold is turned into an acceptance bar.
///
/// Literal: q >= tau * max. When max < 0 the bar lies above the max, so
/// only the argmax survives.
/// Slack: q >= max - (1 - tau) * |max|, sign-independent.
enum class ThresholdMode { Literal, Slack };

struct Objective {
    std::string name;
    double threshold = 1.0;             ///< percentage threshold tau in (0, 1]
    std::optional<double> clamp_level;  ///< absolute clamp for TQ comparison
};

inline constexpr std::size_t kMaxObjectives = 8;

/// Ordered objectives, index 0 has the highest priority. Immutable.
class ObjectiveChain {
public:
    explicit ObjectiveChain(std::vector<Objective> objectives, ThresholdMode mode = ThresholdMode::Literal)
        : objectives_(std::move(objectives)), mode_(mode) {
        if (objectives_.empty()) throw InvalidArgument("objective chain must be non-empty");
        if (objectives_.size() > kMaxObjectives) throw InvalidArgument("too many objectives");
        for (const auto& o : objectives_) {
            if (!(o.threshold > 0.0 && o.threshold <= 1.0))
                throw InvalidArgument("threshold for '" + o.name + "' must lie in (0, 1]");
            if (o.clamp_level && std::isnan(*o.clamp_level))
                throw InvalidArgument("clamp level for '" + o.name + "' is NaN");
        }
    }

    std::size_t size() const { return objectives_.size(); }
    const Objective& operator[](std::size_t i) const { return objectives_.at(i); }
    ThresholdMode mode() const { return mode_; }
    std::span<const Objective> objectives() const { return objectives_; }

    /// Clamp level used by TQ; +inf when unset (last objective unconstrained).
    double clamp_level(std::size_t i) const {
        return objectives_.at(i).clamp_level.value_or(std::numeric_limits<double>::infinity());
    }

private:
    std::vector<Objective> objectives_;
    ThresholdMode mode_;
};

/// Per-objective Q rows for the current per-objective states.
class QSnapshot {
public:
    explicit QSnapshot(std::vector<QRow> rows) : rows_(std::move(rows)) {
        for (const auto& row : rows_)
            for (double q : row)
                if (!std::isfinite(q)) throw InvalidArgument("Q snapshot contains a non-finite value");
    }

    std::size_t objectives() const { return rows_.size(); }
    const QRow& row(std::size_t i) const { return rows_.at(i); }
    std::span<const QRow> rows() const { return rows_; }

private:
    std::vector<QRow> rows_;
};

/// Which objective (if any) is explored this step; at most one.
class ExploreFlags {
public:
    ExploreFlags() = default;
    explicit ExploreFlags(std::size_t n) : flags_(n, false) {}
    ExploreFlags(std::size_t n, std::size_t explored) : flags_(n, false) {
        if (explored >= n) throw InvalidArgument("explored objective index out of range");
        flags_[explored] = true;
    }

    std::size_t size() const { return flags_.size(); }
    bool operator[](std::size_t i) const { return i < flags_.size() && flags_[i]; }
    std::optional<std::size_t> explored() const {
        for (std::size_t i = 0; i < flags_.size(); ++i)
            if (flags_[i]) return i;
        return std::nullopt;
    }
    bool any() const { return explored().has_value(); }

private:
    std::vector<bool> flags_;
};

/// min(q, clamp_level).
inline double clamp_thresholded(double q, double clamp_level) {
    if (!std::isfinite(q) || std::isnan(clamp_level))
        throw InvalidArgument("clamp_thresholded requires finite q and a numeric clamp level");
    // +inf is accepted as "no clamp" for the unconstrained last objective.
    if (std::isinf(clamp_level) && clamp_level < 0)
        throw InvalidArgument("clamp level must not be -inf");
    return std::min(q, clamp_level);
}

/// Superior comparator over clamped vectors, level i is 1-based.
/// Strictly greater at i wins, equal recurses, equal through n is true.
inline bool superior(std::span<const double> tq_a, std::span<const double> tq_b, std::size_t i = 1) {
    const std::size_t n = tq_a.size();
    if (n == 0 || tq_b.size() != n) throw InvalidArgument("superior: vectors must be non-empty and equal length");
    if (i < 1 || i > n) throw InvalidArgument("superior: level out of range");
    for (;;) {
        const double a = tq_a[i - 1];
        const double b = tq_b[i - 1];
        if (a > b) return true;
        if (a == b) {
            if (i == n) return true;
            ++i;
            continue;
        }
        return false;
    }
}

/// Clamped per-action column vectors TQ(s, a) across objectives.
inline std::vector<std::vector<double>> clamped_columns(const QSnapshot& snapshot, const ObjectiveChain& chain) {
    if (snapshot.objectives() != chain.size()) throw InvalidArgument("snapshot rows do not match objective chain");
    std::vector<std::vector<double>> cols(kNumActions, std::vector<double>(chain.size()));
    for (std::size_t i = 0; i < chain.size(); ++i)
        for (std::size_t a = 0; a < kNumActions; ++a)
            cols[a][i] = clamp_thresholded(snapshot.row(i)[a], chain.clamp_level(i));
    return cols;
}

/// Greedy TLQ action: lowest-index action superior to every other action.
inline Action tlq_greedy(const QSnapshot& snapshot, const ObjectiveChain& chain) {
    const auto cols = clamped_columns(snapshot, chain);
    for (std::size_t a = 0; a < kNumActions; ++a) {
        bool beats_all = true;
        for (std::size_t b = 0; b < kNumActions && beats_all; ++b)
            if (b != a && !superior(cols[a], cols[b])) beats_all = false;
        if (beats_all) return action_from_index(a);
    }
    // Unreachable: superior is a total preorder on finite vectors.
    return Action::Accelerate;
}

/// Lowest-index argmax of q over the set. The set must be non-empty.
inline std::size_t argmax_in(ActionSet set, const QRow& q) {
    std::size_t best = kNumActions;
    for (std::size_t a = 0; a < kNumActions; ++a)
        if (set.contains(a) && (best == kNumActions || q[a] > q[best])) best = a;
    return best;
}

/// Actions in prev within the percentage threshold of the best, plus the argmax.
inline ActionSet acceptable_actions(ActionSet prev, const QRow& q, double tau,
                                    ThresholdMode mode = ThresholdMode::Literal) {
    if (prev.empty()) throw InvalidArgument("acceptable_actions: previous set is empty");
    const std::size_t best = argmax_in(prev, q);
    const double qmax = q[best];
    const double bar = mode == ThresholdMode::Literal ? qmax * tau : qmax - (1.0 - tau) * std::abs(qmax);
    ActionSet out = ActionSet::single(best);
    for (std::size_t a = 0; a < kNumActions; ++a) {
#ifdef LEXMORL_FAULT_STRICT_THRESHOLD
        if (prev.contains(a) && q[a] > bar) out.insert(a);
#else
        if (prev.contains(a) && q[a] >= bar) out.insert(a);
#endif
    }
    return out;
}

/// Audit record of one TLO selection.
struct SelectionTrace {
    std::vector<QRow> q;              ///< snapshot rows, priority order
    std::vector<ActionSet> sets;      ///< A_0 .. A_k (k = n unless exploration returned early)
    std::optional<std::size_t> explored;
    Action action = Action::Maintain;

    /// True when the recorded sets are non-empty and nested A_0 >= A_1 >= ...
    bool nested() const {
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (sets[i].empty()) return false;
            if (i > 0 && !sets[i].subset_of(sets[i - 1])) return false;
        }
        return true;
    }
};

struct Selection {
    Action action;
    SelectionTrace trace;
};

/// TLO action selection over the objective chain with per-objective exploration.
inline Selection tlo_select(const QSnapshot& snapshot, const ObjectiveChain& chain, const ExploreFlags& explore,
                            Rng& rng) {
    if (snapshot.objectives() != chain.size()) throw InvalidArgument("snapshot rows do not match objective chain");
    Selection sel{Action::Maintain, {}};
    sel.trace.q.assign(snapshot.rows().begin(), snapshot.rows().end());
    sel.trace.sets.push_back(ActionSet::all());
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const ActionSet prev = sel.trace.sets.back();
        sel.trace.sets.push_back(acceptable_actions(prev, snapshot.row(i), chain[i].threshold, chain.mode()));
        if (explore[i]) {
            const auto members = prev.members();
            sel.action = action_from_index(members[rng.index(members.size())]);
            sel.trace.explored = i;
            sel.trace.action = sel.action;
            return sel;
        }
    }
    sel.action = action_from_index(argmax_in(sel.trace.sets.back(), snapshot.row(chain.size() - 1)));
    sel.trace.action = sel.action;
    return sel;
}

inline void to_json(nlohmann::json& j, const SelectionTrace& t) {
    j = nlohmann::json::object();
    j["q"] = t.q;
    auto sets = nlohmann::json::array();
    for (ActionSet s : t.sets) sets.push_back(s.members());
    j["sets"] = std::move(sets);
    j["explored"] = t.explored ? nlohmann::json(*t.explored) : nlohmann::json(nullptr);
    j["action"] = index_of(t.action);
}

inline void from_json(const nlohmann::json& j, SelectionTrace& t) {
    t.q = j.at("q").get<std::vector<QRow>>();
    t.sets.clear();
    for (const auto& s : j.at("sets")) {
        ActionSet set;
        for (std::size_t a : s.get<std::vector<std::size_t>>()) {
            if (a >= kNumActions) throw DataError("trace action index out of range");
            set.insert(a);
        }
        t.sets.push_back(set);
    }
    const auto& e = j.at("explored");
    t.explored = e.is_null() ? std::nullopt : std::optional<std::size_t>(e.get<std::size_t>());
    const auto a = j.at("action").get<std::size_t>();
    if (a >= kNumActions) throw DataError("trace action index out of range");
    t.action = action_from_index(a);
}

}  // namespace lexmorl
