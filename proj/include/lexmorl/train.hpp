#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "ddqn.hpp"
#include "env.hpp"
#include "map.hpp"
#include "morl.hpp"
#include "observe.hpp"
#include "qfunction.hpp"
#include "replay.hpp"
#include "rewards.hpp"

#ifndef LEXMORL_CODE_VERSION
#define LEXMORL_CODE_VERSION "unknown"
#endif

namespace lexmorl {

enum class AgentMode { Morl, Sorl };

constexpr std::string_view name_of(AgentMode m) { return m == AgentMode::Morl ? "morl" : "sorl"; }

inline AgentMode agent_mode_from_name(const std::string& s) {
    if (s == "morl") return AgentMode::Morl;
    if (s == "sorl") return AgentMode::Sorl;
    throw ConfigError("unknown agent mode '" + s + "' (expected morl or sorl)");
}

/// Random-stream identifiers derived from the run seed.
namespace stream {
inline constexpr std::uint64_t kEnv = 1;
inline constexpr std::uint64_t kAgent = 2;
inline constexpr std::uint64_t kReplay = 3;
inline constexpr std::uint64_t kInitSafety = 4;
inline constexpr std::uint64_t kInitSpeed = 5;
inline constexpr std::uint64_t kInitSorl = 6;
inline constexpr std::uint64_t kEval = 7;
}  // namespace stream

inline std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t stream_id, std::uint64_t episode) {
    return Rng::mix(Rng::mix(run_seed, stream_id), episode);
}

/// Picks one objective uniformly; it is explored with its own epsilon.
inline ExploreFlags pick_exploration(std::uint64_t step, std::span<const EpsilonSchedule> schedules, Rng& rng) {
    if (schedules.empty()) throw InvalidArgument("pick_exploration: no schedules");
    const std::size_t i = rng.index(schedules.size());
    if (rng.bernoulli(schedules[i].value(step))) return ExploreFlags(schedules.size(), i);
    return ExploreFlags(schedules.size());
}

// Input scales bring grid layers to roughly unit range.
inline std::vector<double> grid_input_scale() { return {1.0, 0.1, 1.0 / 180.0, 1.0 / 3.0}; }
inline constexpr double kSpeedInputScale = 1.0 / 8.0;

inline nlohmann::json safety_architecture(const GridSpec& g) {
    CnnQ::Config c;
    c.rows = g.rows;
    c.cols = g.cols;
    c.input_scale = grid_input_scale();
    return CnnQ(c, 0).architecture();
}

inline nlohmann::json speed_architecture() {
    return {{"kind", "mlp"}, {"inputs", 1}, {"hidden", {32, 32}}, {"input_scale", {kSpeedInputScale}}};
}

inline nlohmann::json sorl_architecture(const GridSpec& g) {
    CnnQ::Config c;
    c.rows = g.rows;
    c.cols = g.cols;
    c.extra_inputs = 1;
    c.input_scale = grid_input_scale();
    c.extra_scale = {kSpeedInputScale};
    return CnnQ(c, 0).architecture();
}

/// Network inputs for each agent wiring.
inline ObservationPtr grid_input(const EnvState& s, const MapSpec& m, const GridSpec& g) {
    return std::make_shared<const std::vector<double>>(encode_grid(s, m, g).data);
}
inline ObservationPtr ego_input(const EnvState& s) {
    return std::make_shared<const std::vector<double>>(std::vector<double>{encode_ego(s).speed});
}
inline ObservationPtr sorl_input(const EnvState& s, const MapSpec& m, const GridSpec& g) {
    auto v = encode_grid(s, m, g).data;
    v.push_back(encode_ego(s).speed);
    return std::make_shared<const std::vector<double>>(std::move(v));
}

/// Lowest-index argmax.
inline std::size_t greedy_index(const QRow& q) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < kNumActions; ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

struct TrainProgress {
    std::uint64_t step = 0;
    std::uint64_t total = 0;
    std::uint64_t episodes = 0;
};

struct TrainOptions {
    std::filesystem::path out_dir;
    std::function<void(const TrainProgress&)> progress;  ///< optional, called every progress_every steps
    std::uint64_t progress_every = 5000;
};

struct TrainResult {
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    std::filesystem::path manifest;
};

namespace detail {

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

/// Bookkeeping shared by both agent wirings: log stream, episode returns, checkpoints.
class RunRecorder {
public:
    RunRecorder(AgentMode mode, const RunConfig& cfg, const TrainOptions& opt) : mode_(mode), cfg_(cfg), opt_(opt) {
        std::filesystem::create_directories(opt.out_dir);
        result_.log = opt.out_dir / "train_log.jsonl";
        result_.checkpoint = opt.out_dir / "checkpoint.bin";
        result_.manifest = opt.out_dir / "manifest.json";
        log_.open(result_.log, std::ios::trunc);
        if (!log_) throw DataError("cannot write training log " + result_.log.string());
        nlohmann::json manifest = {
            {"mode", name_of(mode)},
            {"config", config_to_json(cfg)},
            {"seed", cfg.train.seed},
            {"code_version", LEXMORL_CODE_VERSION},
            {"created", utc_timestamp()},
            {"artifacts", {{"log", result_.log.filename().string()}, {"checkpoint", result_.checkpoint.filename().string()}}},
        };
        std::ofstream m(result_.manifest, std::ios::trunc);
        if (!m) throw DataError("cannot write manifest " + result_.manifest.string());
        m << manifest.dump(2) << '\n';
    }

    void step(const nlohmann::json& record) { log_ << record.dump() << '\n'; }

    void episode(std::uint64_t episode, std::uint64_t steps, const RewardVector& ret, DoneReason reason, double distance) {
        log_ << nlohmann::json{{"type", "episode"},
                               {"episode", episode},
                               {"steps", steps},
                               {"return", {ret.safety, ret.speed}},
                               {"reason", name_of(reason)},
                               {"distance", distance}}
                    .dump()
             << '\n';
    }

    void error(std::uint64_t step, const std::string& what) {
        log_ << nlohmann::json{{"type", "error"}, {"step", step}, {"message", what}}.dump() << '\n';
        log_.flush();
    }

    Checkpoint checkpoint(std::uint64_t step) const {
        Checkpoint c;
        c.step = step;
        c.metadata = {{"mode", name_of(mode_)},
                      {"config", config_to_json(cfg_)},
                      {"code_version", LEXMORL_CODE_VERSION}};
        return c;
    }

    void save(const Checkpoint& c) {
        log_.flush();
        save_checkpoint(c, result_.checkpoint);
    }

    void progress(std::uint64_t step, std::uint64_t episodes) const {
        if (opt_.progress && opt_.progress_every > 0 && step % opt_.progress_every == 0)
            opt_.progress({step, cfg_.train.total_steps, episodes});
    }

    TrainResult& result() { return result_; }

private:
    AgentMode mode_;
    const RunConfig& cfg_;
    const TrainOptions& opt_;
    std::ofstream log_;
    TrainResult result_;
};

inline RmsPropState make_optimizer(const TrainConfig& t, double lr) {
    RmsPropState o;
    o.learning_rate = lr;
    o.rho = t.rms_rho;
    o.epsilon = t.rms_epsilon;
    return o;
}

}  // namespace detail

/// Two DQNs (safety on the grid, speed on ego speed) with separate replay,
/// per-objective exploration and TLO action selection.
inline TrainResult train_morl(const RunConfig& cfg, const TrainOptions& opt) {
    cfg.validate();
    const TrainConfig& tc = cfg.train;
    const auto map = std::make_shared<const MapSpec>(builtin_or_file_map(cfg.map));
    Environment env(cfg.env, map);
    const ObjectiveChain chain = cfg.threshold.chain();
    const std::vector<EpsilonSchedule> schedules{tc.eps_safety, tc.eps_speed};

    auto safety = make_qfunction(safety_architecture(cfg.grid), Rng::mix(tc.seed, stream::kInitSafety));
    auto speed = make_qfunction(speed_architecture(), Rng::mix(tc.seed, stream::kInitSpeed));
    auto safety_target = safety->clone();
    auto speed_target = speed->clone();
    RmsPropState safety_opt = detail::make_optimizer(tc, tc.lr_safety);
    RmsPropState speed_opt = detail::make_optimizer(tc, tc.lr_speed);
    ReplayBuffer safety_replay(tc.replay_capacity), speed_replay(tc.replay_capacity);
    Rng agent_rng(Rng::mix(tc.seed, stream::kAgent));
    Rng replay_rng(Rng::mix(tc.seed, stream::kReplay));

    detail::RunRecorder rec(AgentMode::Morl, cfg, opt);
    auto make_checkpoint = [&](std::uint64_t step) {
        Checkpoint c = rec.checkpoint(step);
        c.add("safety", *safety, safety_opt);
        c.add("speed", *speed, speed_opt);
        return c;
    };

    std::uint64_t episode = 0, ep_steps = 0;
    RewardVector ep_return;
    env.reset(episode_seed(tc.seed, stream::kEnv, episode));
    ObservationPtr grid = grid_input(env.state(), *map, cfg.grid);
    ObservationPtr ego = ego_input(env.state());

    for (std::uint64_t step = 0; step < tc.total_steps; ++step) {
        rec.progress(step, episode);
        const ExploreFlags flags = pick_exploration(step, schedules, agent_rng);
        const QSnapshot snap({safety->q_values(*grid), speed->q_values(*ego)});
        const Selection sel = tlo_select(snap, chain, flags, agent_rng);

        const StepOutcome out = env.step(sel.action);
        const RewardVector r = reward_vector(out.event, env.state().ego.speed, cfg.reward);
        ObservationPtr next_grid = grid_input(env.state(), *map, cfg.grid);
        ObservationPtr next_ego = ego_input(env.state());
        safety_replay.push({grid, index_of(sel.action), r.safety, next_grid, out.done});
        speed_replay.push({ego, index_of(sel.action), r.speed, next_ego, out.done});

        std::optional<double> loss_safety, loss_speed;
        try {
            if (step % tc.train_every == 0 && safety_replay.size() >= tc.warmup) {
                loss_safety = train_step(*safety, safety_replay.sample(tc.batch_size, replay_rng), tc.gamma, safety_opt,
                                         *safety_target, tc.loss);
                loss_speed = train_step(*speed, speed_replay.sample(tc.batch_size, replay_rng), tc.gamma, speed_opt,
                                        *speed_target, tc.loss);
            }
        } catch (const TrainingError& e) {
            rec.error(step, e.what());
            throw;
        }
        if ((step + 1) % tc.target_sync == 0) {
            sync_target(*safety, *safety_target);
            sync_target(*speed, *speed_target);
        }

        rec.step({{"type", "step"},
                  {"step", step},
                  {"episode", episode},
                  {"action", name_of(sel.action)},
                  {"explored", sel.trace.explored ? nlohmann::json(chain[*sel.trace.explored].name) : nlohmann::json(nullptr)},
                  {"eps", {tc.eps_safety.value(step), tc.eps_speed.value(step)}},
                  {"reward", {r.safety, r.speed}},
                  {"loss", {detail::optional_json(loss_safety), detail::optional_json(loss_speed)}},
                  {"speed", env.state().ego.speed},
                  {"done", out.done}});

        ep_return.safety += r.safety;
        ep_return.speed += r.speed;
        ++ep_steps;
        if (out.done) {
            rec.episode(episode, ep_steps, ep_return, out.reason, env.state().distance_travelled);
            ++episode;
            ep_steps = 0;
            ep_return = {};
            env.reset(episode_seed(tc.seed, stream::kEnv, episode));
            next_grid = grid_input(env.state(), *map, cfg.grid);
            next_ego = ego_input(env.state());
        }
        grid = std::move(next_grid);
        ego = std::move(next_ego);
        if ((step + 1) % tc.checkpoint_every == 0 && step + 1 < tc.total_steps) rec.save(make_checkpoint(step + 1));
    }
    rec.save(make_checkpoint(tc.total_steps));
    rec.result().steps = tc.total_steps;
    rec.result().episodes = episode;
    return rec.result();
}

/// Single DQN on the grid with ego speed joined at the first dense layer,
/// trained on the summed reward with plain epsilon-greedy exploration.
inline TrainResult train_sorl(const RunConfig& cfg, const TrainOptions& opt) {
    cfg.validate();
    const TrainConfig& tc = cfg.train;
    const auto map = std::make_shared<const MapSpec>(builtin_or_file_map(cfg.map));
    Environment env(cfg.env, map);

    auto net = make_qfunction(sorl_architecture(cfg.grid), Rng::mix(tc.seed, stream::kInitSorl));
    auto target = net->clone();
    RmsPropState net_opt = detail::make_optimizer(tc, tc.lr_sorl);
    ReplayBuffer replay(tc.replay_capacity);
    Rng agent_rng(Rng::mix(tc.seed, stream::kAgent));
    Rng replay_rng(Rng::mix(tc.seed, stream::kReplay));

    detail::RunRecorder rec(AgentMode::Sorl, cfg, opt);
    auto make_checkpoint = [&](std::uint64_t step) {
        Checkpoint c = rec.checkpoint(step);
        c.add("sorl", *net, net_opt);
        return c;
    };

    std::uint64_t episode = 0, ep_steps = 0;
    RewardVector ep_return;
    env.reset(episode_seed(tc.seed, stream::kEnv, episode));
    ObservationPtr obs = sorl_input(env.state(), *map, cfg.grid);

    for (std::uint64_t step = 0; step < tc.total_steps; ++step) {
        rec.progress(step, episode);
        const double eps = tc.eps_sorl.value(step);
        const bool explore = agent_rng.bernoulli(eps);
        const std::size_t a = explore ? agent_rng.index(kNumActions) : greedy_index(net->q_values(*obs));
        const Action action = action_from_index(a);

        const StepOutcome out = env.step(action);
        const RewardVector rv = reward_vector(out.event, env.state().ego.speed, cfg.reward);
        const double r = scalarize(rv);
        ObservationPtr next = sorl_input(env.state(), *map, cfg.grid);
        replay.push({obs, a, r, next, out.done});

        std::optional<double> loss;
        try {
            if (step % tc.train_every == 0 && replay.size() >= tc.warmup)
                loss = train_step(*net, replay.sample(tc.batch_size, replay_rng), tc.gamma, net_opt, *target, tc.loss);
        } catch (const TrainingError& e) {
            rec.error(step, e.what());
            throw;
        }
        if ((step + 1) % tc.target_sync == 0) sync_target(*net, *target);

        rec.step({{"type", "step"},
                  {"step", step},
                  {"episode", episode},
                  {"action", name_of(action)},
                  {"explored", explore},
                  {"eps", {eps}},
                  {"reward", {rv.safety, rv.speed}},
                  {"loss", {detail::optional_json(loss)}},
                  {"speed", env.state().ego.speed},
                  {"done", out.done}});

        ep_return.safety += rv.safety;
        ep_return.speed += rv.speed;
        ++ep_steps;
        if (out.done) {
            rec.episode(episode, ep_steps, ep_return, out.reason, env.state().distance_travelled);
            ++episode;
            ep_steps = 0;
            ep_return = {};
            env.reset(episode_seed(tc.seed, stream::kEnv, episode));
            next = sorl_input(env.state(), *map, cfg.grid);
        }
        obs = std::move(next);
        if ((step + 1) % tc.checkpoint_every == 0 && step + 1 < tc.total_steps) rec.save(make_checkpoint(step + 1));
    }
    rec.save(make_checkpoint(tc.total_steps));
    rec.result().steps = tc.total_steps;
    rec.result().episodes = episode;
    return rec.result();
}

inline TrainResult train_agent(AgentMode mode, const RunConfig& cfg, const TrainOptions& opt) {
    return mode == AgentMode::Morl ? train_morl(cfg, opt) : train_sorl(cfg, opt);
}

}  // namespace lexmorl
