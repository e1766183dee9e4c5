#include <gtest/gtest.h>

#include <lexmorl/cli.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lexmorl;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "lexmorl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(LEXMORL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("lexmorl_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string config(const char* name) { return std::string(LEXMORL_TEST_DATA) + "/" + name; }

}  // namespace

TEST(Cli, HelpAndUsage) {
    const auto help = run_cli({"--help"});
    EXPECT_EQ(help.code, cli::kExitOk);
    for (const char* sub : {"train", "eval", "compare", "trace", "mapgen", "selftest"})
        EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
    EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"fly"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"train", "--mode", "morl"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"train", "--mode", "lexi", "--config", config("smoke.json"), "--out", "/tmp/x"}).code,
              cli::kExitUsage);
    EXPECT_EQ(run_cli({"eval", "--maps", "train"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"eval", "--policy", "brake", "--episodes", "0"}).code, cli::kExitUsage);
}

TEST(Cli, BinaryExitCodes) {
    EXPECT_EQ(run_binary("--help"), 0);
    EXPECT_EQ(run_binary("nonsense"), 1);
    EXPECT_EQ(run_binary("eval --checkpoint /nonexistent.bin"), 1);
    EXPECT_EQ(run_binary("eval --policy brake --maps /nonexistent-map.json --episodes 1"), 2);
}

TEST(Cli, BadConfigIsDataError) {
    const auto dir = scratch("badcfg");
    std::ofstream(dir / "cfg.json") << R"({"training": {"gamma": 2.0}})";
    const auto r = run_cli({"train", "--mode", "morl", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, cli::kExitData);
    EXPECT_NE(r.err.find("config error"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, CorruptCheckpointIsDataError) {
    const auto dir = scratch("badckpt");
    std::ofstream(dir / "c.bin") << "LEXMORL1 definitely not a checkpoint";
    const auto r = run_cli({"eval", "--checkpoint", (dir / "c.bin").string(), "--episodes", "1"});
    EXPECT_EQ(r.code, cli::kExitData);
    fs::remove_all(dir);
}

TEST(Cli, ScriptedEvalReportsAndCompares) {
    const auto dir = scratch("eval");
    const auto a = run_cli({"eval", "--policy", "accelerate", "--maps", "train", "heldout1", "--episodes", "3", "--threads",
                            "1", "--report", (dir / "a.json").string(), "--csv", (dir / "a.csv").string(), "--trace",
                            (dir / "a.jsonl").string()});
    ASSERT_EQ(a.code, cli::kExitOk) << a.err;
    for (const auto& m : kMetrics) EXPECT_NE(a.out.find(m.label), std::string::npos) << m.label;
    const auto report = nlohmann::json::parse(slurp(dir / "a.json"));
    EXPECT_EQ(report.at("episodes"), 3);
    EXPECT_EQ(report.at("reports").size(), 2u);
    EXPECT_EQ(slurp(dir / "a.csv").rfind("map,policy,metric,label,value,half_width,n\n", 0), 0u);

    const auto b = run_cli({"eval", "--policy", "maintain", "--maps", "train", "--episodes", "3", "--threads", "1",
                            "--report", (dir / "b.json").string()});
    ASSERT_EQ(b.code, cli::kExitOk) << b.err;
    const auto cmp = run_cli({"compare", (dir / "a.json").string(), (dir / "b.json").string(), "--csv",
                              (dir / "cmp.csv").string()});
    EXPECT_EQ(cmp.code, cli::kExitOk) << cmp.err;
    EXPECT_NE(cmp.out.find("map train"), std::string::npos);
    EXPECT_EQ(cmp.out.find("map heldout1"), std::string::npos);
    EXPECT_EQ(slurp(dir / "cmp.csv").rfind("map,metric,label,a,b,better\n", 0), 0u);

    const auto tr = run_cli({"trace", "--episode", (dir / "a.jsonl").string(), "--quiet"});
    EXPECT_EQ(tr.code, cli::kExitOk) << tr.err;
    fs::remove_all(dir);
}

TEST(Cli, EvalIsReproducible) {
    const auto dir = scratch("repro");
    const std::vector<std::string> base = {"eval", "--policy", "accelerate", "--maps", "heldout2", "--episodes", "4", "--seed", "9"};
    auto one = base, two = base;
    one.insert(one.end(), {"--threads", "1", "--report", (dir / "1.json").string()});
    two.insert(two.end(), {"--threads", "2", "--report", (dir / "2.json").string()});
    ASSERT_EQ(run_cli(one).code, 0);
    ASSERT_EQ(run_cli(two).code, 0);
    EXPECT_EQ(slurp(dir / "1.json"), slurp(dir / "2.json"));
    fs::remove_all(dir);
}

TEST(Cli, TraceVerification) {
    const auto dir = scratch("trace");
    ASSERT_EQ(run_cli({"eval", "--policy", "accelerate", "--maps", "train", "--episodes", "2", "--threads", "1", "--trace",
                       (dir / "t.jsonl").string()})
                  .code,
              0);
    const auto printed = run_cli({"trace", "--episode", (dir / "t.jsonl").string(), "--index", "1"});
    EXPECT_EQ(printed.code, cli::kExitOk);
    EXPECT_NE(printed.out.find("episode 1"), std::string::npos);
    EXPECT_EQ(run_cli({"trace", "--episode", (dir / "t.jsonl").string(), "--index", "5"}).code, cli::kExitData);

    // Tampering with a recorded distance breaks the metrics replay.
    std::string text = slurp(dir / "t.jsonl");
    const auto at = text.find("\"distance\":");
    ASSERT_NE(at, std::string::npos);
    text.insert(at + 11, "1");
    std::ofstream(dir / "bad.jsonl") << text;
    EXPECT_EQ(run_cli({"trace", "--episode", (dir / "bad.jsonl").string(), "--quiet"}).code, cli::kExitVerify);

    std::ofstream(dir / "junk.jsonl") << "not json\n";
    EXPECT_EQ(run_cli({"trace", "--episode", (dir / "junk.jsonl").string()}).code, cli::kExitData);

    std::ofstream(dir / "empty.jsonl") << "";
    const auto empty = run_cli({"trace", "--episode", (dir / "empty.jsonl").string()});
    EXPECT_EQ(empty.code, cli::kExitOk);
    EXPECT_NE(empty.out.find("no episodes in trace"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, NonNestedSetsDetected) {
    const auto dir = scratch("nested");
    // Safety keeps {0,1}; the speed set then claims action 3, outside it.
    const nlohmann::json sel = {{"q", {{1.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 1.0}}},
                                {"sets", {{0, 1, 2, 3}, {0, 1}, {3}}},
                                {"action", 3},
                                {"explored", nullptr}};
    std::ofstream f(dir / "t.jsonl");
    f << nlohmann::json{{"type", "episode_start"}, {"episode", 0}, {"seed", 1}, {"map", "train"}, {"policy", "morl"}}.dump()
      << '\n';
    f << nlohmann::json{{"type", "step"},        {"episode", 0},   {"step", 0},          {"action", "accelerate"},
                        {"speed_before", 0.0},   {"speed", 0.5},   {"distance", 0.025},  {"in_intersection", false},
                        {"nearest_front", nullptr}, {"event", "clear"}, {"reward", {0.0, -1.0}}, {"done", false},
                        {"reason", "none"},      {"selection", sel}}
             .dump()
      << '\n';
    f.close();
    const auto r = run_cli({"trace", "--episode", (dir / "t.jsonl").string()});
    EXPECT_EQ(r.code, cli::kExitVerify) << r.out << r.err;
    EXPECT_NE(r.err.find("non-nested"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, TrainAndEvalCheckpoint) {
    const auto dir = scratch("train");
    std::ofstream(dir / "cfg.json") << R"({"environment": {"grid": {"rows": 12, "cols": 9}, "step_cap": 60},
        "training": {"total_steps": 120, "warmup": 32, "batch_size": 4, "checkpoint_every": 60}})";
    const auto t = run_cli({"train", "--mode", "morl", "--config", (dir / "cfg.json").string(), "--out",
                            (dir / "run").string(), "--seed", "3", "--quiet"});
    ASSERT_EQ(t.code, cli::kExitOk) << t.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.bin"));
    const auto manifest = nlohmann::json::parse(slurp(dir / "run" / "manifest.json"));
    EXPECT_EQ(manifest.at("seed"), 3);
    const auto e = run_cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.bin").string(), "--maps", "train",
                            "--episodes", "2", "--threads", "1", "--trace", (dir / "t.jsonl").string()});
    ASSERT_EQ(e.code, cli::kExitOk) << e.err;
    const auto tr = run_cli({"trace", "--episode", (dir / "t.jsonl").string(), "--index", "0"});
    EXPECT_EQ(tr.code, cli::kExitOk) << tr.err;
    EXPECT_NE(tr.out.find("A_1"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, MapgenRoundTrips) {
    const auto dir = scratch("mapgen");
    ASSERT_EQ(run_cli({"mapgen", "--map", "heldout2", "--out", (dir / "m.json").string()}).code, 0);
    EXPECT_EQ(map_to_json(load_map((dir / "m.json").string())), map_to_json(builtin_map("heldout2")));
    const auto r = run_cli({"eval", "--policy", "brake", "--maps", (dir / "m.json").string(), "--episodes", "1"});
    EXPECT_EQ(r.code, 0) << r.err;
    fs::remove_all(dir);
}
