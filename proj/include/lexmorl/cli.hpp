#pragma once

// Command-line front end: train, eval, compare, trace, mapgen, selftest.
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "evalkit.hpp"
#include "map.hpp"
#include "train.hpp"
#include "verify/selftest.hpp"

namespace lexmorl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitVerify = 3;

struct TrainArgs {
    std::string mode;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> steps;
    std::optional<std::uint64_t> train_every;
    std::optional<std::string> threshold_mode;
    std::optional<double> tau_safety;
    std::optional<double> tau_speed;
    std::optional<std::string> map;
    bool quiet = false;
};

struct EvalArgs {
    std::string checkpoint;
    std::string policy;
    std::string config;
    std::vector<std::string> maps{"train"};
    std::size_t episodes = 100;
    std::uint64_t seed = 1;
    std::size_t threads = 0;
    std::string report;
    std::string csv;
    std::string trace;
};

struct CompareArgs {
    std::string a;
    std::string b;
    std::string csv;
};

struct TraceArgs {
    std::string file;
    std::optional<std::size_t> episode;
    bool quiet = false;
};

struct MapgenArgs {
    std::string map;
    std::string out;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << text;
    if (!f) throw DataError("failed writing '" + path + "'");
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path + "': " + e.what());
    }
}

/// Reports stored by `eval --report`: {"reports": [...]}; a bare report also works.
inline std::vector<AggregateReport> read_reports(const std::string& path) {
    const auto j = read_json(path);
    std::vector<AggregateReport> out;
    if (j.contains("reports")) {
        for (const auto& r : j.at("reports")) out.push_back(report_from_json(r));
    } else {
        out.push_back(report_from_json(j));
    }
    return out;
}

inline std::string set_text(ActionSet s) {
    std::string out = "{";
    for (std::size_t a : s.members()) {
        if (out.size() > 1) out += ", ";
        out += name_of(action_from_index(a));
    }
    return out + "}";
}

inline std::string row_text(const nlohmann::json& row) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << '[';
    for (std::size_t i = 0; i < row.size(); ++i) s << (i ? ", " : "") << row[i].get<double>();
    s << ']';
    return s.str();
}

}  // namespace detail

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.steps) cfg.train.total_steps = *a.steps;
    if (a.train_every) cfg.train.train_every = *a.train_every;
    if (a.threshold_mode) cfg.threshold.mode = lexmorl::detail::enum_from_name<ThresholdMode>(*a.threshold_mode, "threshold mode");
    if (a.tau_safety) cfg.threshold.safety = *a.tau_safety;
    if (a.tau_speed) cfg.threshold.speed = *a.tau_speed;
    if (a.map) cfg.map = *a.map;
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    TrainOptions opt;
    opt.out_dir = a.out;
    if (!a.quiet)
        opt.progress = [&err](const TrainProgress& p) {
            err << "step " << p.step << "/" << p.total << ", episodes " << p.episodes << '\n';
        };
    const TrainResult r = train_agent(agent_mode_from_name(a.mode), cfg, opt);
    out << "trained " << a.mode << " for " << r.steps << " steps (" << r.episodes << " episodes)\n"
        << "checkpoint " << r.checkpoint.string() << "\nlog " << r.log.string() << "\nmanifest " << r.manifest.string()
        << '\n';
    return kExitOk;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    std::unique_ptr<Policy> policy;
    RunConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config);
    if (!a.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(a.checkpoint);
        policy = policy_from_checkpoint(ck);
        if (a.config.empty()) cfg = checkpoint_config(ck);
    } else {
        const auto action = action_from_name(a.policy);
        if (!action) throw ConfigError("unknown scripted policy '" + a.policy + "'");
        policy = std::make_unique<ScriptedPolicy>(*action);
    }
    EvalOptions opt;
    opt.episodes = a.episodes;
    opt.seed = a.seed;
    opt.threads = a.threads;
    opt.traces = !a.trace.empty();
    opt.reward = cfg.reward;

    nlohmann::json reports = nlohmann::json::array();
    std::string csv = std::string(kReportCsvHeader) + '\n';
    std::string traces;
    for (const auto& name : a.maps) {
        auto map = std::make_shared<const MapSpec>(builtin_or_file_map(name));
        const EvalResult r = run_eval(*policy, cfg.env, map, opt);
        out << report_text(r.report) << '\n';
        reports.push_back(report_to_json(r.report));
        csv += report_csv_rows(r.report);
        for (const auto& t : r.traces) traces += t;
    }
    if (!a.report.empty())
        detail::write_text(a.report, nlohmann::json{{"episodes", a.episodes}, {"seed", a.seed}, {"reports", reports}}.dump(2) + '\n');
    if (!a.csv.empty()) detail::write_text(a.csv, csv);
    if (!a.trace.empty()) detail::write_text(a.trace, traces);
    return kExitOk;
}

inline int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
    const auto ra = detail::read_reports(a.a);
    const auto rb = detail::read_reports(a.b);
    std::string csv;
    std::size_t matched = 0;
    for (const auto& x : ra)
        for (const auto& y : rb) {
            if (x.map != y.map) continue;
            out << "map " << x.map << '\n' << comparison_text(x, y) << '\n';
            std::string rows = comparison_csv(x, y);
            csv += matched == 0 ? rows : rows.substr(rows.find('\n') + 1);
            ++matched;
        }
    if (matched == 0) {
        err << "no map appears in both reports\n";
        return kExitData;
    }
    if (!a.csv.empty()) detail::write_text(a.csv, csv);
    return kExitOk;
}

/// Pretty-prints selection traces and rechecks them: acceptable sets must be
/// nested and the replayed metrics must equal the recorded ones.
inline int cmd_trace(const TraceArgs& a, std::ostream& out, std::ostream& err) {
    std::ifstream in(a.file);
    if (!in) throw DataError("cannot open '" + a.file + "'");
    const auto episodes = parse_trace(in);
    if (episodes.empty()) {
        out << "no episodes in trace\n";
        return kExitOk;
    }
    std::size_t corrupt = 0, shown = 0;
    for (const auto& ep : episodes) {
        if (a.episode && ep.episode != *a.episode) continue;
        ++shown;
        const std::string policy = ep.header.value("policy", std::string("?"));
        const std::vector<std::string> names =
            policy == "morl" ? std::vector<std::string>{"safety", "speed"} : std::vector<std::string>{"scalar"};
        out << "episode " << ep.episode << " policy " << policy << " map " << ep.header.value("map", std::string("?"))
            << " seed " << ep.header.value("seed", std::uint64_t{0}) << ", " << ep.steps.size() << " steps\n";
        for (const auto& s : ep.steps) {
            const auto step = s.at("step").get<std::size_t>();
            if (!a.quiet) {
                out << std::fixed << std::setprecision(3) << "  step " << step << ": " << s.at("action").get<std::string>()
                    << ", speed " << s.at("speed_before").get<double>() << " -> " << s.at("speed").get<double>()
                    << ", reward " << detail::row_text(s.at("reward")) << ", " << s.at("event").get<std::string>() << '\n';
            }
            if (s.at("selection").is_null()) continue;
            SelectionTrace t;
            try {
                t = s.at("selection").get<SelectionTrace>();
            } catch (const nlohmann::json::exception& e) {
                throw DataError("trace step " + std::to_string(step) + ": " + e.what());
            }
            if (!a.quiet) {
                for (std::size_t i = 0; i < t.q.size(); ++i) {
                    const std::string n = i < names.size() ? names[i] : "objective " + std::to_string(i);
                    out << "    Q_" << n << " = " << detail::row_text(s.at("selection").at("q")[i]);
                    if (i + 1 < t.sets.size()) out << "  A_" << (i + 1) << " = " << detail::set_text(t.sets[i + 1]);
                    out << '\n';
                }
                if (t.explored) {
                    const std::string n = *t.explored < names.size() ? names[*t.explored] : std::to_string(*t.explored);
                    out << "    explored objective " << *t.explored << " (" << n << ")\n";
                }
            }
            if (!t.nested()) {
                ++corrupt;
                err << "corrupt trace: episode " << ep.episode << " step " << step << " has non-nested acceptable sets\n";
            }
        }
        if (ep.recorded) {
            const double dt = ep.header.value("dt", 0.1), v_ref = ep.header.value("v_ref", 8.0);
            if (!(replay_metrics(ep, dt, v_ref) == *ep.recorded)) {
                ++corrupt;
                err << "corrupt trace: episode " << ep.episode << " metrics do not match its steps\n";
            }
        }
    }
    if (a.episode && shown == 0) {
        err << "episode " << *a.episode << " not in trace\n";
        return kExitData;
    }
    if (corrupt) {
        err << corrupt << " verification failure(s)\n";
        return kExitVerify;
    }
    return kExitOk;
}

inline int cmd_mapgen(const MapgenArgs& a, std::ostream& out, std::ostream&) {
    const MapSpec m = builtin_map(a.map);
    const std::string text = map_to_json(m).dump(2) + '\n';
    if (a.out.empty()) {
        out << text;
    } else {
        detail::write_text(a.out, text);
        out << "wrote " << a.out << '\n';
    }
    return kExitOk;
}

inline int cmd_selftest(const verify::SelftestOptions& opt, std::ostream& out, std::ostream&) {
    bool ok = true;
    for (const auto& r : verify::run_selftest(opt)) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    if (opt.fast) out << "SKIP chain-convergence (--fast)\n";
    return ok ? kExitOk : kExitVerify;
}

/// Parses and dispatches. Errors are reported on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Thresholded lexicographic multi-objective RL for urban driving."};
    app.name("lexmorl");
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a MORL or SORL agent");
    train->add_option("--mode", ta.mode, "Agent kind")->required()->check(CLI::IsMember({"morl", "sorl"}));
    train->add_option("--config", ta.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", ta.out, "Output directory")->required();
    train->add_option("--seed", ta.seed, "Override training.seed");
    train->add_option("--steps", ta.steps, "Override training.total_steps")->check(CLI::PositiveNumber);
    train->add_option("--train-every", ta.train_every, "Override training.train_every")->check(CLI::PositiveNumber);
    train->add_option("--threshold-mode", ta.threshold_mode, "Override threshold.mode")
        ->check(CLI::IsMember({"literal", "slack"}));
    train->add_option("--tau-safety", ta.tau_safety, "Override threshold.safety");
    train->add_option("--tau-speed", ta.tau_speed, "Override threshold.speed");
    train->add_option("--map", ta.map, "Override the training map (builtin name or JSON file)");
    train->add_flag("--quiet", ta.quiet, "No progress output");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or scripted policy over seeded episodes");
    auto* ck = eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
    auto* pol = eval->add_option("--policy", ea.policy, "Scripted policy instead of a checkpoint")
                    ->check(CLI::IsMember({"accelerate", "decelerate", "brake", "maintain"}));
    ck->excludes(pol);
    pol->excludes(ck);
    eval->add_option("--config", ea.config, "Environment config (default: the checkpoint's, else built-in)")
        ->check(CLI::ExistingFile);
    eval->add_option("--maps", ea.maps, "Maps: train, heldout1, heldout2 or JSON files")->expected(1, -1);
    eval->add_option("--episodes", ea.episodes, "Episodes per map")->check(CLI::PositiveNumber);
    eval->add_option("--seed", ea.seed, "Evaluation seed");
    eval->add_option("--threads", ea.threads, "Worker threads (default: LEXI_MORL_THREADS or all cores)");
    eval->add_option("--report", ea.report, "Write JSON report");
    eval->add_option("--csv", ea.csv, "Write CSV report");
    eval->add_option("--trace", ea.trace, "Write JSON-lines step traces");

    CompareArgs ca;
    auto* cmp = app.add_subcommand("compare", "Compare two eval reports metric by metric");
    cmp->add_option("a", ca.a, "First report (JSON)")->required()->check(CLI::ExistingFile);
    cmp->add_option("b", ca.b, "Second report (JSON)")->required()->check(CLI::ExistingFile);
    cmp->add_option("--csv", ca.csv, "Write comparison CSV");

    TraceArgs tr;
    auto* trace = app.add_subcommand("trace", "Print and recheck per-step selection traces");
    trace->add_option("--episode", tr.file, "Trace file (JSON lines)")->required()->check(CLI::ExistingFile);
    trace->add_option("--index", tr.episode, "Only this episode");
    trace->add_flag("--quiet", tr.quiet, "Only report verification problems");

    MapgenArgs ma;
    auto* mapgen = app.add_subcommand("mapgen", "Write a builtin map as JSON");
    mapgen->add_option("--map", ma.map, "Builtin map")->required()->check(CLI::IsMember({"train", "heldout1", "heldout2"}));
    mapgen->add_option("--out", ma.out, "Output file (default: stdout)");

    verify::SelftestOptions so;
    auto* selftest = app.add_subcommand("selftest", "Run the built-in verification suites");
    selftest->add_flag("--fast", so.fast, "Skip the convergence suite and shrink gradient fixtures");
    selftest->add_option("--seed", so.seed, "Fixture seed");

    try {
        app.parse(argc, argv);
        if (eval->parsed() && ea.checkpoint.empty() && ea.policy.empty())
            throw CLI::ValidationError("eval", "one of --checkpoint or --policy is required");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(ta, out, err);
        if (eval->parsed()) return cmd_eval(ea, out, err);
        if (cmp->parsed()) return cmd_compare(ca, out, err);
        if (trace->parsed()) return cmd_trace(tr, out, err);
        if (mapgen->parsed()) return cmd_mapgen(ma, out, err);
        if (selftest->parsed()) return cmd_selftest(so, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitData;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const TrainingError& e) {
        err << "training error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace lexmorl::cli
