#include "commands.hpp"
#include "config.hpp"
#include "io.hpp"

#include "bsdekit/errors.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bsde;
using namespace bsde::cli;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bsdekit_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "bsdekit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (err_text) *err_text = err.str();
    return code;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("effective config survives a dump and reparse") {
    const ExperimentConfig c = parse_config(R"({"problem": {"name": "bz", "dim": 3, "rate": 0.3},
        "loss": {"kind": "em", "skip": 5, "n_steps": 25}, "optimizer": {"schedule": [[5, 0.01], [10, 0.001]],
        "iterations": 10}, "seeds": [4, 5], "verify": {"quadform_q": [[[1, 0], [0, 2]]]}})");
    const auto dumped = to_json(c);
    CHECK(to_json(parse_config(dumped.dump())) == dumped);
    CHECK(dumped["problem"]["horizon"].is_null());
    CHECK(dumped["loss"]["skip"] == 5);
    CHECK(dumped["optimizer"]["schedule"][1][0] == 10);
    CHECK(dumped["landscape"]["points"] == 101);
}

TEST_CASE("config errors name the offending key or position") {
    try {
        parse_config(R"({"loss": {"skp": 2}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("loss.skp") != std::string::npos);
    }
    try {
        parse_config("{\n  \"seed\": 1,\n  oops\n}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"loss": {"kind": "rk4"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"loss": {"batch": "many"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"loss": {"n_steps": 10}, "sweep": {"skips": [20], "n_steps": [10]}})"),
                    ConfigError);
}

TEST_CASE("verify passes on defaults and fails loudly on tampered settings") {
    const fs::path dir = fresh_dir("verify");
    CHECK(run({"verify", "--quiet", "--out", (dir / "ok").string()}) == kExitOk);
    const json report = json::parse(slurp(dir / "ok" / "verify_report.json"));
    CHECK(report["passed"] == true);
    CHECK(report["n_failed"] == 0);
    CHECK(report["checks"].size() == report["n_checks"]);

    const fs::path asym = write_config(dir, R"({"verify": {"quadform_q": [[[1, 2], [0, 1]]]}})");
    CHECK(run({"verify", "--quiet", "--config", asym.string(), "--out", (dir / "asym").string()}) ==
          kExitCheckFailure);
    bool named = false;
    const json asym_report = json::parse(slurp(dir / "asym" / "verify_report.json"));
    for (const auto& ch : asym_report["checks"]) {
        if (ch["name"].get<std::string>() == "quadform_variance:config[0]") named = !ch["passed"].get<bool>();
    }
    CHECK(named);

    const fs::path tight = write_config(dir, R"({"verify": {"bias_tolerance": 0}})");
    CHECK(run({"verify", "--quiet", "--config", tight.string(), "--out", (dir / "tight").string()}) ==
          kExitCheckFailure);
}

TEST_CASE("bad configs exit with the config code") {
    const fs::path dir = fresh_dir("bad");
    std::string err;
    const fs::path bad = write_config(dir, R"({"loss": {"skp": 2}})");
    CHECK(run({"eval", "--config", bad.string(), "--out", dir.string()}, &err) == kExitConfigError);
    CHECK(err.find("loss.skp") != std::string::npos);
    CHECK(run({"eval", "--config", (dir / "missing.json").string()}) == kExitConfigError);
    CHECK(run({"nonsense"}) != kExitOk);
}

TEST_CASE("eval of the exact solution reports zero error") {
    const fs::path dir = fresh_dir("eval");
    const fs::path cfg =
        write_config(dir, R"({"problem": {"name": "bsb", "dim": 2}, "model": {"family": "scaled_exact"}})");
    REQUIRE(run({"eval", "--quiet", "--config", cfg.string(), "--out", dir.string()}) == kExitOk);
    const nlohmann::ordered_json meta = nlohmann::ordered_json::parse(slurp(dir / "eval_meta.json"));
    CHECK(meta["rl2_overall"].get<double>() <= 1e-10);
    CHECK(meta["reference"]["kind"] == "closed_form");
    CHECK(slurp(dir / "eval.csv").rfind("knot,t,rl2_step,rl2_overall\n", 0) == 0);
    // the echoed config reproduces the effective one
    const ExperimentConfig back = parse_config(meta["config"].dump());
    CHECK(to_json(back) == meta["config"]);
    CHECK(back.model.family == "scaled_exact");
    for (const char* key : {"command", "version", "started_utc", "threads", "seed", "seeds", "wall_seconds"}) {
        CHECK(meta.contains(key));
    }
}

TEST_CASE("landscape writes one row per grid point and step size") {
    const fs::path dir = fresh_dir("landscape");
    const fs::path cfg = write_config(dir, R"({"landscape": {"points": 5, "em_taus": [0.1],
        "heun_taus": [0.1, 0.05], "batch": 20}})");
    REQUIRE(run({"landscape", "--quiet", "--config", cfg.string(), "--out", dir.string()}) == kExitOk);
    const json meta = json::parse(slurp(dir / "landscape_meta.json"));
    CHECK(meta["rows"] == 15);
    const std::string csv = slurp(dir / "landscape.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 16);
}

TEST_CASE("sweep reruns are byte-identical") {
    const fs::path dir = fresh_dir("sweep");
    const fs::path cfg = write_config(dir, R"({"loss": {"kind": "em", "n_steps": 10, "batch": 8},
        "optimizer": {"iterations": 15, "snapshot_every": 0}, "sweep": {"skips": [1, 5], "n_steps": [10]},
        "seeds": [0, 1]})");
    REQUIRE(run({"sweep", "--quiet", "--config", cfg.string(), "--out", (dir / "a").string()}) == kExitOk);
    REQUIRE(run({"sweep", "--quiet", "--config", cfg.string(), "--out", (dir / "b").string()}) == kExitOk);
    const std::string a = slurp(dir / "a" / "sweep.csv");
    const std::string b = slurp(dir / "b" / "sweep.csv");
    CHECK(fnv1a_hex(a.data(), a.size()) == fnv1a_hex(b.data(), b.size()));
    CHECK(std::count(a.begin(), a.end(), '\n') == 5);
    // --seed collapses the seed list
    REQUIRE(run({"sweep", "--quiet", "--config", cfg.string(), "--seed", "7", "--out", (dir / "c").string()}) ==
            kExitOk);
    const std::string c = slurp(dir / "c" / "sweep.csv");
    CHECK(std::count(c.begin(), c.end(), '\n') == 3);
}

TEST_CASE("train writes a trace with a final RL2 row") {
    const fs::path dir = fresh_dir("train");
    const fs::path cfg = write_config(dir, R"({"loss": {"n_steps": 10, "batch": 8},
        "optimizer": {"iterations": 20, "snapshot_every": 10}})");
    REQUIRE(run({"train", "--quiet", "--config", cfg.string(), "--out", dir.string()}) == kExitOk);
    const std::string csv = slurp(dir / "train.csv");
    CHECK(csv.rfind("iter,loss,lr,rl2\n", 0) == 0);
    CHECK(csv.find("\n20,,,") != std::string::npos);
    const json meta = json::parse(slurp(dir / "train_meta.json"));
    CHECK(meta["blew_up"] == false);
    CHECK(meta["final_theta"].size() > 0);
}

TEST_CASE("Monte-Carlo references are cached across runs") {
    const fs::path dir = fresh_dir("cache");
    const fs::path cfg = write_config(dir, R"({"problem": {"name": "hjb", "dim": 1}, "loss": {"n_steps": 4},
        "model": {"theta": [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]}, "eval": {"paths": 1, "reference_samples": 2000}})");
    std::string err;
    const int first = run({"eval", "--quiet", "--config", cfg.string(), "--out", dir.string()}, &err);
    INFO(err);
    REQUIRE(first == kExitOk);
    const json m1 = json::parse(slurp(dir / "eval_meta.json"));
    CHECK(m1["reference"]["cache_misses"].get<int>() > 0);
    REQUIRE(run({"eval", "--quiet", "--config", cfg.string(), "--out", dir.string()}) == kExitOk);
    const json m2 = json::parse(slurp(dir / "eval_meta.json"));
    CHECK(m2["reference"]["cache_misses"] == 0);
    CHECK(m2["reference"]["cache_hits"] == m1["reference"]["cache_misses"]);
    CHECK(m2["rl2_overall"] == m1["rl2_overall"]);
}

TEST_CASE("installed binary maps errors to exit codes") {
    const fs::path dir = fresh_dir("binary");
    const fs::path bad = write_config(dir, "{ not json");
    const std::string cmd = std::string("\"") + BSDEKIT_TOOL_PATH + "\" eval --config \"" + bad.string() +
                            "\" --out \"" + dir.string() + "\" >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == kExitConfigError);
    const std::string help = std::string("\"") + BSDEKIT_TOOL_PATH + "\" --help >/dev/null 2>&1";
    CHECK(std::system(help.c_str()) == 0);
}
