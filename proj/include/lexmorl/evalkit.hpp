#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "env.hpp"
#include "map.hpp"
#include "morl.hpp"
#include "observe.hpp"
#include "qfunction.hpp"
#include "rewards.hpp"
#include "train.hpp"

namespace lexmorl {

/// Pedestrian distances below this are recorded as close encounters.
inline constexpr double kClosePedestrianDistance = 2.0;

/// Everything the metrics need from one environment step.
struct StepRecord {
    Action action = Action::Maintain;
    double speed_before = 0.0;
    double speed = 0.0;     ///< after the step
    double distance = 0.0;  ///< route distance covered this step
    bool in_intersection = false;
    std::optional<double> nearest_front_pedestrian;
    SafetyEvent::Kind event = SafetyEvent::Kind::Clear;
    bool done = false;
    DoneReason reason = DoneReason::None;
};

struct EpisodeMetrics {
    bool collision_free = true;
    bool success = false;
    double distance_m = 0.0;
    std::size_t steps = 0;
    double avg_speed_mps = 0.0;
    bool speed_violated = false;
    double crossing_duration_pct = 0.0;
    std::size_t stops = 0;
    std::vector<double> closest_ped_distances;

    friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

/// Folds step records into episode metrics.
///
/// A stop is a Brake step that takes the speed from positive to zero, so a
/// run of braking that ends standing still counts once.
class MetricsAccumulator {
public:
    MetricsAccumulator(double dt, double v_ref) : dt_(dt), v_ref_(v_ref) {
        if (!(dt > 0.0) || !(v_ref > 0.0)) throw InvalidArgument("metrics: dt and v_ref must be positive");
    }

    void add(const StepRecord& r) {
        ++m_.steps;
        m_.distance_m += r.distance;
        if (r.in_intersection) ++intersection_steps_;
        if (r.speed > v_ref_) m_.speed_violated = true;
        if (r.action == Action::Brake && r.speed_before > 0.0 && r.speed == 0.0) ++m_.stops;
        if (r.nearest_front_pedestrian && *r.nearest_front_pedestrian < kClosePedestrianDistance)
            m_.closest_ped_distances.push_back(*r.nearest_front_pedestrian);
        if (r.event == SafetyEvent::Kind::Collision) m_.collision_free = false;
        if (r.done) m_.success = r.reason == DoneReason::Goal && m_.collision_free;
    }

    EpisodeMetrics finish() const {
        EpisodeMetrics m = m_;
        if (m.steps > 0) {
            m.avg_speed_mps = m.distance_m / (static_cast<double>(m.steps) * dt_);
            m.crossing_duration_pct = 100.0 * static_cast<double>(intersection_steps_) / static_cast<double>(m.steps);
        }
        return m;
    }

private:
    double dt_;
    double v_ref_;
    std::size_t intersection_steps_ = 0;
    EpisodeMetrics m_;
};

// ---------------------------------------------------------------- policies

struct Decision {
    Action action = Action::Maintain;
    std::optional<SelectionTrace> trace;
};

/// Greedy evaluation policy. `act` is const and may be called concurrently.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual Decision act(const EnvState& state, const MapSpec& map) const = 0;
};

class ScriptedPolicy final : public Policy {
public:
    explicit ScriptedPolicy(Action a) : action_(a) {}
    std::string name() const override { return "scripted-" + std::string(name_of(action_)); }
    Decision act(const EnvState&, const MapSpec&) const override { return {action_, std::nullopt}; }

private:
    Action action_;
};

class MorlPolicy final : public Policy {
public:
    MorlPolicy(std::shared_ptr<const QFunction> safety, std::shared_ptr<const QFunction> speed, ObjectiveChain chain,
               GridSpec grid)
        : safety_(std::move(safety)), speed_(std::move(speed)), chain_(std::move(chain)), grid_(grid) {}
    std::string name() const override { return "morl"; }
    Decision act(const EnvState& s, const MapSpec& m) const override {
        const QSnapshot snap({safety_->q_values(encode_grid(s, m, grid_).data), speed_->q_values(std::vector<double>{s.ego.speed})});
        Rng unused(0);  // no exploration during evaluation
        Selection sel = tlo_select(snap, chain_, ExploreFlags(chain_.size()), unused);
        return {sel.action, std::move(sel.trace)};
    }

private:
    std::shared_ptr<const QFunction> safety_, speed_;
    ObjectiveChain chain_;
    GridSpec grid_;
};

class SorlPolicy final : public Policy {
public:
    SorlPolicy(std::shared_ptr<const QFunction> net, GridSpec grid) : net_(std::move(net)), grid_(grid) {}
    std::string name() const override { return "sorl"; }
    Decision act(const EnvState& s, const MapSpec& m) const override {
        auto obs = encode_grid(s, m, grid_).data;
        obs.push_back(s.ego.speed);
        const QRow q = net_->q_values(obs);
        SelectionTrace t;
        t.q = {q};
        t.action = action_from_index(greedy_index(q));
        return {t.action, std::move(t)};
    }

private:
    std::shared_ptr<const QFunction> net_;
    GridSpec grid_;
};

/// Run configuration stored with a checkpoint.
inline RunConfig checkpoint_config(const Checkpoint& c) {
    if (!c.metadata.contains("config")) throw DataError("checkpoint: metadata has no config");
    try {
        return config_from_json(c.metadata.at("config"));
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: stored config invalid: ") + e.what());
    }
}

inline std::unique_ptr<Policy> policy_from_checkpoint(const Checkpoint& c) {
    const RunConfig cfg = checkpoint_config(c);
    const std::string mode = c.metadata.value("mode", "");
    if (mode == "morl")
        return std::make_unique<MorlPolicy>(restore_network(c.network("safety")), restore_network(c.network("speed")),
                                            cfg.threshold.chain(), cfg.grid);
    if (mode == "sorl") return std::make_unique<SorlPolicy>(restore_network(c.network("sorl")), cfg.grid);
    throw DataError("checkpoint: unknown agent mode '" + mode + "'");
}

// ---------------------------------------------------------------- traces

constexpr std::string_view name_of(SafetyEvent::Kind k) {
    switch (k) {
        case SafetyEvent::Kind::Clear: return "clear";
        case SafetyEvent::Kind::NearCollision: return "near_collision";
        case SafetyEvent::Kind::Collision: return "collision";
    }
    return "?";
}

inline SafetyEvent::Kind event_kind_from_name(const std::string& s) {
    if (s == "clear") return SafetyEvent::Kind::Clear;
    if (s == "near_collision") return SafetyEvent::Kind::NearCollision;
    if (s == "collision") return SafetyEvent::Kind::Collision;
    throw DataError("trace: unknown event '" + s + "'");
}

inline DoneReason done_reason_from_name(const std::string& s) {
    for (DoneReason r : {DoneReason::None, DoneReason::Goal, DoneReason::Collision, DoneReason::StepCap})
        if (name_of(r) == s) return r;
    throw DataError("trace: unknown done reason '" + s + "'");
}

inline nlohmann::json metrics_to_json(const EpisodeMetrics& m) {
    return {{"collision_free", m.collision_free},
            {"success", m.success},
            {"distance_m", m.distance_m},
            {"steps", m.steps},
            {"avg_speed_mps", m.avg_speed_mps},
            {"speed_violated", m.speed_violated},
            {"crossing_duration_pct", m.crossing_duration_pct},
            {"stops", m.stops},
            {"closest_ped_distances", m.closest_ped_distances}};
}

inline EpisodeMetrics metrics_from_json(const nlohmann::json& j) {
    EpisodeMetrics m;
    m.collision_free = j.at("collision_free").get<bool>();
    m.success = j.at("success").get<bool>();
    m.distance_m = j.at("distance_m").get<double>();
    m.steps = j.at("steps").get<std::size_t>();
    m.avg_speed_mps = j.at("avg_speed_mps").get<double>();
    m.speed_violated = j.at("speed_violated").get<bool>();
    m.crossing_duration_pct = j.at("crossing_duration_pct").get<double>();
    m.stops = j.at("stops").get<std::size_t>();
    m.closest_ped_distances = j.at("closest_ped_distances").get<std::vector<double>>();
    return m;
}

inline nlohmann::json step_record_to_json(std::size_t episode, std::size_t step, const StepRecord& r,
                                          const RewardVector& reward, const std::optional<SelectionTrace>& sel) {
    return {{"type", "step"},
            {"episode", episode},
            {"step", step},
            {"action", name_of(r.action)},
            {"speed_before", r.speed_before},
            {"speed", r.speed},
            {"distance", r.distance},
            {"in_intersection", r.in_intersection},
            {"nearest_front", detail::optional_json(r.nearest_front_pedestrian)},
            {"event", name_of(r.event)},
            {"reward", {reward.safety, reward.speed}},
            {"done", r.done},
            {"reason", name_of(r.reason)},
            {"selection", sel ? nlohmann::json(*sel) : nlohmann::json(nullptr)}};
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
    StepRecord r;
    const auto action = action_from_name(j.at("action").get<std::string>());
    if (!action) throw DataError("trace: unknown action '" + j.at("action").get<std::string>() + "'");
    r.action = *action;
    r.speed_before = j.at("speed_before").get<double>();
    r.speed = j.at("speed").get<double>();
    r.distance = j.at("distance").get<double>();
    r.in_intersection = j.at("in_intersection").get<bool>();
    if (!j.at("nearest_front").is_null()) r.nearest_front_pedestrian = j.at("nearest_front").get<double>();
    r.event = event_kind_from_name(j.at("event").get<std::string>());
    r.done = j.at("done").get<bool>();
    r.reason = done_reason_from_name(j.at("reason").get<std::string>());
    return r;
}

/// One parsed JSON-lines trace episode.
struct TraceEpisode {
    std::size_t episode = 0;
    nlohmann::json header;
    std::vector<nlohmann::json> steps;
    std::optional<EpisodeMetrics> recorded;  ///< metrics stored at episode end, if present
};

/// Groups trace lines into episodes; blank lines are skipped.
inline std::vector<TraceEpisode> parse_trace(std::istream& in) {
    std::vector<TraceEpisode> out;
    std::string line;
    std::size_t lineno = 0;
    auto current = [&](std::size_t ep) -> TraceEpisode& {
        if (out.empty() || out.back().episode != ep) {
            out.push_back({});
            out.back().episode = ep;
        }
        return out.back();
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto type = j.at("type").get<std::string>();
            const auto ep = j.at("episode").get<std::size_t>();
            if (type == "episode_start") current(ep).header = j;
            else if (type == "step") current(ep).steps.push_back(j);
            else if (type == "episode_end") current(ep).recorded = metrics_from_json(j.at("metrics"));
            else throw DataError("unknown record type '" + type + "'");
        } catch (const nlohmann::json::exception& e) {
            throw DataError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Recomputes episode metrics from the step records of a stored trace.
inline EpisodeMetrics replay_metrics(const TraceEpisode& ep, double dt, double v_ref) {
    MetricsAccumulator acc(dt, v_ref);
    for (const auto& s : ep.steps) {
        try {
            acc.add(step_record_from_json(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("trace step: ") + e.what());
        }
    }
    return acc.finish();
}

// ---------------------------------------------------------------- episodes

struct EpisodeResult {
    EpisodeMetrics metrics;
    std::string trace;  ///< JSON-lines, empty unless requested
};

/// Runs one greedy episode to termination.
inline EpisodeResult run_episode(const Policy& policy, const EnvConfig& cfg, std::shared_ptr<const MapSpec> map,
                                 std::size_t episode, std::uint64_t seed, bool want_trace, const RewardConfig& reward) {
    Environment env(cfg, map);
    env.reset(seed);
    MetricsAccumulator acc(cfg.dt, cfg.v_ref);
    std::ostringstream trace;
    if (want_trace)
        trace << nlohmann::json{{"type", "episode_start"}, {"episode", episode}, {"seed", seed}, {"map", map->name},
                                {"policy", policy.name()}, {"dt", cfg.dt}, {"v_ref", cfg.v_ref}}
                     .dump()
              << '\n';
    std::size_t step = 0;
    while (!env.state().done) {
        const Decision d = policy.act(env.state(), *map);
        StepRecord r;
        r.action = d.action;
        r.speed_before = env.state().ego.speed;
        const StepOutcome out = env.step(d.action);
        r.speed = env.state().ego.speed;
        r.distance = out.info.distance;
        r.in_intersection = out.info.in_intersection;
        r.nearest_front_pedestrian = out.info.nearest_front_pedestrian;
        r.event = out.event.kind;
        r.done = out.done;
        r.reason = out.reason;
        acc.add(r);
        if (want_trace)
            trace << step_record_to_json(episode, step, r, reward_vector(out.event, r.speed, reward), d.trace).dump() << '\n';
        ++step;
    }
    EpisodeResult res{acc.finish(), {}};
    if (want_trace) {
        trace << nlohmann::json{{"type", "episode_end"}, {"episode", episode}, {"metrics", metrics_to_json(res.metrics)}}.dump()
              << '\n';
        res.trace = trace.str();
    }
    return res;
}

// ---------------------------------------------------------------- reports

enum class Better { Higher, Lower, Neither };

struct MetricInfo {
    std::string_view id;
    std::string_view label;
    Better better;
    bool percentage;
};

/// The nine reported metrics in table row order.
inline constexpr MetricInfo kMetrics[] = {
    {"collision_free", "Collision Free Episodes (%)", Better::Higher, true},
    {"success", "Success Rate (%)", Better::Higher, true},
    {"distance", "Distance Travelled (m)", Better::Higher, false},
    {"steps", "Average Steps", Better::Neither, false},
    {"speed", "Average Speed (m/s)", Better::Higher, false},
    {"speed_violation", "Speed Violation (%)", Better::Lower, true},
    {"crossing_duration", "Crossing Duration (%)", Better::Lower, false},
    {"stops", "Average Stops", Better::Lower, false},
    {"closest_pedestrian", "Closest Pedestrian Distance (m)", Better::Higher, false},
};
inline constexpr std::size_t kNumMetrics = std::size(kMetrics);

struct MetricValue {
    std::optional<double> value;  ///< absent when undefined (no episodes / no events)
    double half_width = 0.0;      ///< 95% normal-approximation half-width
    std::size_t samples = 0;
};

struct AggregateReport {
    std::string label;
    std::string map;
    std::size_t n = 0;
    std::array<MetricValue, kNumMetrics> metrics{};
};

namespace detail {

inline MetricValue mean_of(const std::vector<double>& xs) {
    MetricValue v;
    v.samples = xs.size();
    if (xs.empty()) return v;
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    v.value = mean;
    if (xs.size() > 1) v.half_width = 1.96 * std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    return v;
}

inline MetricValue percentage_of(std::size_t hits, std::size_t n) {
    MetricValue v;
    v.samples = n;
    if (n == 0) return v;
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    v.value = 100.0 * p;
    v.half_width = 100.0 * 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return v;
}

}  // namespace detail

/// Order-insensitive aggregate. Percentages are over episodes; the closest
/// pedestrian distance is the mean over all pooled close encounters.
inline AggregateReport aggregate(const std::vector<EpisodeMetrics>& eps, std::string label = "", std::string map = "") {
    AggregateReport r;
    r.label = std::move(label);
    r.map = std::move(map);
    r.n = eps.size();
    std::size_t cf = 0, ok = 0, viol = 0;
    std::vector<double> dist, steps, speed, cross, stops, close;
    for (const auto& e : eps) {
        cf += e.collision_free;
        ok += e.success;
        viol += e.speed_violated;
        dist.push_back(e.distance_m);
        steps.push_back(static_cast<double>(e.steps));
        speed.push_back(e.avg_speed_mps);
        cross.push_back(e.crossing_duration_pct);
        stops.push_back(static_cast<double>(e.stops));
        close.insert(close.end(), e.closest_ped_distances.begin(), e.closest_ped_distances.end());
    }
    // Pooled encounters are summed in sorted order so shuffling episodes cannot change the result.
    std::sort(close.begin(), close.end());
    for (auto* v : {&dist, &steps, &speed, &cross, &stops}) std::sort(v->begin(), v->end());
    r.metrics = {detail::percentage_of(cf, r.n), detail::percentage_of(ok, r.n), detail::mean_of(dist),
                 detail::mean_of(steps),         detail::mean_of(speed),         detail::percentage_of(viol, r.n),
                 detail::mean_of(cross),         detail::mean_of(stops),         detail::mean_of(close)};
    return r;
}

inline const MetricValue& metric(const AggregateReport& r, std::string_view id) {
    for (std::size_t i = 0; i < kNumMetrics; ++i)
        if (kMetrics[i].id == id) return r.metrics[i];
    throw InvalidArgument("unknown metric '" + std::string(id) + "'");
}

inline nlohmann::json report_to_json(const AggregateReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < kNumMetrics; ++i) {
        const auto& m = r.metrics[i];
        rows.push_back({{"id", kMetrics[i].id},
                        {"label", kMetrics[i].label},
                        {"value", detail::optional_json(m.value)},
                        {"half_width", m.half_width},
                        {"samples", m.samples}});
    }
    return {{"label", r.label},
            {"map", r.map},
            {"n", r.n},
            {"metrics", rows},
            {"notes", {"Average Steps includes episodes that hit the step cap.",
                       "Closest Pedestrian Distance averages all front crossing encounters under 2 m; null when none occurred.",
                       "half_width is a 95% normal-approximation interval."}}};
}

inline AggregateReport report_from_json(const nlohmann::json& j) {
    AggregateReport r;
    try {
        r.label = j.value("label", "");
        r.map = j.value("map", "");
        r.n = j.at("n").get<std::size_t>();
        const auto& rows = j.at("metrics");
        for (std::size_t i = 0; i < kNumMetrics; ++i) {
            const nlohmann::json* row = nullptr;
            for (const auto& x : rows)
                if (x.at("id").get<std::string>() == kMetrics[i].id) row = &x;
            if (!row) throw DataError("report: missing metric '" + std::string(kMetrics[i].id) + "'");
            if (!row->at("value").is_null()) r.metrics[i].value = row->at("value").get<double>();
            r.metrics[i].half_width = row->at("half_width").get<double>();
            r.metrics[i].samples = row->value("samples", std::size_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("report: ") + e.what());
    }
    return r;
}

inline std::string format_value(const std::optional<double>& v) {
    if (!v) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
}

inline constexpr std::string_view kReportCsvHeader = "map,policy,metric,label,value,half_width,n";

/// CSV rows (no header) with columns kReportCsvHeader; empty value = undefined.
inline std::string report_csv_rows(const AggregateReport& r) {
    std::ostringstream s;
    for (std::size_t i = 0; i < kNumMetrics; ++i)
        s << r.map << ',' << r.label << ',' << kMetrics[i].id << ",\"" << kMetrics[i].label << "\","
          << (r.metrics[i].value ? format_value(r.metrics[i].value) : "") << ',' << format_value(r.metrics[i].half_width)
          << ',' << r.n << '\n';
    return s.str();
}

inline std::string report_to_csv(const AggregateReport& r) { return std::string(kReportCsvHeader) + '\n' + report_csv_rows(r); }

/// Human-readable table in metric row order.
inline std::string report_text(const AggregateReport& r) {
    std::ostringstream s;
    s << (r.label.empty() ? "policy" : r.label) << " on " << (r.map.empty() ? "?" : r.map) << ", " << r.n << " episodes\n";
    for (std::size_t i = 0; i < kNumMetrics; ++i) {
        const auto& m = r.metrics[i];
        s << "  " << std::left << std::setw(34) << kMetrics[i].label << std::right << std::setw(12) << format_value(m.value);
        if (m.value) s << "  +/- " << format_value(m.half_width);
        s << '\n';
    }
    return s.str();
}

// ---------------------------------------------------------------- compare

enum class Winner { A, B, Tie, None };

constexpr std::string_view name_of(Winner w) {
    switch (w) {
        case Winner::A: return "a";
        case Winner::B: return "b";
        case Winner::Tie: return "tie";
        case Winner::None: return "-";
    }
    return "?";
}

inline Winner better_of(Better dir, const std::optional<double>& a, const std::optional<double>& b) {
    if (dir == Better::Neither || !a || !b) return Winner::None;
    if (*a == *b) return Winner::Tie;
    const bool a_higher = *a > *b;
    return (dir == Better::Higher) == a_higher ? Winner::A : Winner::B;
}

struct ComparisonRow {
    const MetricInfo* info = nullptr;
    std::optional<double> a, b;
    Winner winner = Winner::None;
};

inline std::vector<ComparisonRow> compare(const AggregateReport& a, const AggregateReport& b) {
    std::vector<ComparisonRow> rows;
    for (std::size_t i = 0; i < kNumMetrics; ++i)
        rows.push_back({&kMetrics[i], a.metrics[i].value, b.metrics[i].value,
                        better_of(kMetrics[i].better, a.metrics[i].value, b.metrics[i].value)});
    return rows;
}

inline std::string comparison_text(const AggregateReport& a, const AggregateReport& b) {
    const auto rows = compare(a, b);
    const std::string la = a.label.empty() ? "A" : a.label, lb = b.label.empty() ? "B" : b.label;
    std::ostringstream s;
    s << std::left << std::setw(34) << "Metric" << std::right << std::setw(14) << la << std::setw(14) << lb << "  Better\n";
    for (const auto& r : rows) {
        auto mark = [&](Winner side, const std::optional<double>& v) {
            return format_value(v) + (r.winner == side ? "*" : " ");
        };
        s << std::left << std::setw(34) << r.info->label << std::right << std::setw(14) << mark(Winner::A, r.a)
          << std::setw(14) << mark(Winner::B, r.b) << "  "
          << (r.winner == Winner::A ? la : r.winner == Winner::B ? lb : std::string(name_of(r.winner))) << '\n';
    }
    s << "N = " << a.n << " / " << b.n << "; * marks the better value.\n";
    return s.str();
}

/// CSV columns: map,metric,label,a,b,better (better is a, b, tie or -).
inline std::string comparison_csv(const AggregateReport& a, const AggregateReport& b) {
    std::ostringstream s;
    s << "map,metric,label,a,b,better\n";
    for (const auto& r : compare(a, b))
        s << a.map << ',' << r.info->id << ",\"" << r.info->label << "\"," << (r.a ? format_value(r.a) : "") << ','
          << (r.b ? format_value(r.b) : "") << ',' << name_of(r.winner) << '\n';
    return s.str();
}

// ---------------------------------------------------------------- runner

/// Worker count: LEXI_MORL_THREADS if set (>= 1), else hardware concurrency.
inline std::size_t eval_threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LEXI_MORL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

struct EvalOptions {
    std::size_t episodes = 100;
    std::uint64_t seed = 1;
    bool traces = false;
    std::size_t threads = 0;  ///< 0 = eval_threads()
    RewardConfig reward;      ///< used only for trace reward columns
};

struct EvalResult {
    std::vector<EpisodeMetrics> episodes;
    std::vector<std::string> traces;  ///< per episode, when requested
    AggregateReport report;
};

/// Seed of evaluation episode i; shared by every policy evaluated under `seed`.
inline std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t i) { return episode_seed(seed, stream::kEval, i); }

/// Greedy evaluation over seeded episodes; results are independent of thread count.
inline EvalResult run_eval(const Policy& policy, const EnvConfig& cfg, std::shared_ptr<const MapSpec> map,
                           const EvalOptions& opt) {
    cfg.validate();
    EvalResult res;
    res.episodes.resize(opt.episodes);
    if (opt.traces) res.traces.resize(opt.episodes);
    const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads ? opt.threads : eval_threads(), opt.episodes));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < opt.episodes; i = next++) {
            try {
                auto r = run_episode(policy, cfg, map, i, eval_episode_seed(opt.seed, i), opt.traces, opt.reward);
                res.episodes[i] = std::move(r.metrics);
                if (opt.traces) res.traces[i] = std::move(r.trace);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = opt.episodes;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    res.report = aggregate(res.episodes, policy.name(), map->name);
    return res;
}

}  // namespace lexmorl
