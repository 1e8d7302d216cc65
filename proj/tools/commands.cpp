#include "commands.hpp"

#include "io.hpp"
#include "verify.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

namespace bsde::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kCacheFile = "hjb_reference_cache.json";

/// Reference seed for Monte-Carlo values, fixed per eval seed.
std::uint64_t reference_seed(const ExperimentConfig& c) { return mix_seed(c.eval.seed, 0x4ef); }

class Clock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void log(const RunOptions& o, const std::string& line) {
    if (o.log) *o.log << line << '\n' << std::flush;
}

ordered_json base_meta(const std::string& command, const ExperimentConfig& c, const std::string& started) {
    ordered_json j;
    j["command"] = command;
    j["version"] = version_string();
    j["started_utc"] = started;
    j["threads"] = thread_count();
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["config"] = to_json(c);
    return j;
}

void write_meta(const fs::path& out, const std::string& command, ordered_json meta, double wall) {
    meta["wall_seconds"] = wall;
    write_atomic(out / (command + "_meta.json"), meta.dump(2) + "\n");
}

ordered_json report_meta(const SweepReport& r) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : r.metadata()) j[k] = v;
    return j;
}

/// Reference function for problems without a closed form (empty otherwise).
ReferenceFn reference_for(const ProblemPtr& problem, const ExperimentConfig& c, ReferenceCache& cache) {
    if (problem->has_exact_solution()) return {};
    if (auto hjb = std::dynamic_pointer_cast<const HjbProblem>(problem)) {
        return cache.hjb(hjb, c.eval.reference_samples, reference_seed(c));
    }
    return {};
}

ordered_json reference_meta(const ProblemPtr& problem, const ExperimentConfig& c, const ReferenceCache& cache) {
    ordered_json j;
    if (problem->has_exact_solution()) {
        j["kind"] = "closed_form";
        return j;
    }
    j["kind"] = "monte_carlo";
    j["samples"] = c.eval.reference_samples;
    j["seed"] = reference_seed(c);
    j["cache_file"] = kCacheFile;
    j["cache_hits"] = cache.hits();
    j["cache_misses"] = cache.misses();
    return j;
}

TrainSetup make_setup(const ExperimentConfig& c, const ProblemPtr& problem) {
    TrainSetup s;
    s.loss = build_loss(c, problem->horizon());
    s.adam = build_adam(c);
    s.eval.n_paths = c.eval.paths;
    s.eval.seed = c.eval.seed;
    s.eval.include_terminal = c.eval.include_terminal;
    return s;
}

ordered_json theta_json(const Vec& theta) {
    return ordered_json(std::vector<double>(theta.data(), theta.data() + theta.size()));
}

}  // namespace

int cmd_verify(const ExperimentConfig& c, const RunOptions& o) {
    const Clock clock;
    const std::string started = utc_timestamp();
    VerifyHooks hooks;
    hooks.on_done = [&](const CheckResult& r) {
        log(o, std::string(r.passed ? "PASS " : "FAIL ") + r.name + "  value=" + format_double(r.value) +
                   " tol=" + format_double(r.tolerance) + (r.passed ? "" : "  " + r.detail));
    };
    const std::vector<CheckResult> results = run_verify_checks(c, hooks);

    ordered_json checks = ordered_json::array();
    int failed = 0;
    for (const CheckResult& r : results) {
        if (!r.passed) ++failed;
        ordered_json e;
        e["name"] = r.name;
        e["passed"] = r.passed;
        e["value"] = std::isfinite(r.value) ? ordered_json(r.value) : ordered_json(nullptr);
        e["tolerance"] = r.tolerance;
        e["detail"] = r.detail;
        checks.push_back(std::move(e));
    }
    ordered_json report = base_meta("verify", c, started);
    report["passed"] = failed == 0;
    report["n_checks"] = results.size();
    report["n_failed"] = failed;
    report["checks"] = std::move(checks);
    report["wall_seconds"] = clock.seconds();
    write_atomic(o.out / "verify_report.json", report.dump(2) + "\n");
    log(o, std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) + " checks passed");
    return failed == 0 ? kExitOk : kExitCheckFailure;
}

int cmd_train(const ExperimentConfig& c, const RunOptions& o) {
    const Clock clock;
    const std::string started = utc_timestamp();
    const ProblemPtr problem = build_problem(c);
    const ModelPtr model = build_model(c, problem);
    ReferenceCache cache(o.out / kCacheFile);
    const ReferenceFn ref = reference_for(problem, c, cache);
    const TrainSetup setup = make_setup(c, problem);
    log(o, "training " + c.loss.kind + " on " + problem->name() + " (d=" + std::to_string(problem->dim()) +
               ", " + std::to_string(setup.adam.total_iters) + " iterations)");

    const TrainOutcome r = train_and_evaluate(problem, model, setup, c.seed, ref);
    cache.save();

    SweepReport table("iter", {"iter", "loss", "lr", "rl2"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::size_t snap = 0;
    const auto& snaps = r.trace.rl2;
    for (std::size_t i = 0; i <= r.trace.loss.size(); ++i) {
        const auto it = static_cast<std::int64_t>(i);
        double rl2 = nan;
        while (snap < snaps.size() && snaps[snap].iter < it) ++snap;
        if (snap < snaps.size() && snaps[snap].iter == it) rl2 = snaps[snap].rl2;
        if (i == r.trace.loss.size()) {
            // Final row: score of the trained parameters, no further step.
            if (std::isnan(rl2)) break;
            table.add_row({it, nan, nan, rl2});
        } else {
            table.add_row({it, r.trace.loss[i], r.trace.lr[i], rl2});
        }
    }
    write_atomic(o.out / "train.csv", table.to_csv());

    ordered_json meta = base_meta("train", c, started);
    meta["columns"] = table.columns();
    meta["problem"] = problem->name();
    meta["model"] = model->name();
    meta["final_rl2"] = std::isfinite(r.rl2) ? ordered_json(r.rl2) : ordered_json(nullptr);
    meta["final_loss"] = r.trace.loss.empty() ? ordered_json(nullptr) : ordered_json(r.trace.loss.back());
    meta["final_theta"] = theta_json(r.trace.final_theta);
    meta["blew_up"] = r.trace.blew_up;
    meta["failed_iter"] = r.trace.failed_iter;
    meta["failure"] = r.failure;
    meta["training_seconds"] = r.trace.wall_seconds;
    meta["reference"] = reference_meta(problem, c, cache);
    write_meta(o.out, "train", std::move(meta), clock.seconds());

    if (r.trace.blew_up) {
        log(o, "training failed at iteration " + std::to_string(r.trace.failed_iter) + ": " + r.failure);
        return kExitBlowUp;
    }
    log(o, "final rl2 " + format_double(r.rl2));
    return kExitOk;
}

int cmd_sweep(const ExperimentConfig& c, const RunOptions& o) {
    const Clock clock;
    const std::string started = utc_timestamp();
    const ProblemPtr problem = build_problem(c);
    const ModelPtr model = build_model(c, problem);
    ReferenceCache cache(o.out / kCacheFile);
    const ReferenceFn ref = reference_for(problem, c, cache);
    const TrainSetup setup = make_setup(c, problem);
    log(o, "sweeping " + std::to_string(c.sweep.skips.size() * c.sweep.n_steps.size() * c.seeds.size()) +
               " runs of " + c.loss.kind + " on " + problem->name());

    const SweepReport r = skip_sweep(problem, model, setup, c.sweep.skips, c.sweep.n_steps, c.seeds, ref);
    cache.save();
    write_atomic(o.out / "sweep.csv", r.to_csv());

    const std::size_t status = r.column_index("status");
    std::size_t failed = 0;
    for (const auto& row : r.rows()) {
        if (std::get<std::string>(row[status]) != "ok") ++failed;
    }
    ordered_json meta = base_meta("sweep", c, started);
    meta["columns"] = r.columns();
    meta["report"] = report_meta(r);
    meta["rows"] = r.row_count();
    meta["failed_rows"] = failed;
    meta["reference"] = reference_meta(problem, c, cache);
    write_meta(o.out, "sweep", std::move(meta), clock.seconds());

    log(o, std::to_string(r.row_count() - failed) + "/" + std::to_string(r.row_count()) + " runs succeeded");
    return failed == r.row_count() && failed > 0 ? kExitBlowUp : kExitOk;
}

int cmd_landscape(const ExperimentConfig& c, const RunOptions& o) {
    const Clock clock;
    const std::string started = utc_timestamp();
    const ProblemPtr problem =
        c.landscape.problem.empty() ? build_problem(c) : make_problem(c.landscape.problem, {});
    LandscapeOptions opt;
    const int n = c.landscape.points;
    for (int i = 0; i < n; ++i) {
        opt.theta_grid.push_back(c.landscape.theta_min +
                                 (c.landscape.theta_max - c.landscape.theta_min) * i / (n - 1));
    }
    opt.em_taus = c.landscape.em_taus;
    opt.heun_taus = c.landscape.heun_taus;
    opt.batch = c.landscape.batch;
    opt.seed = c.seed;
    log(o, "landscape on " + problem->name() + ": " + std::to_string(n) + " thetas x " +
               std::to_string(opt.em_taus.size() + opt.heun_taus.size()) + " step sizes");

    const SweepReport r = landscape_sweep(problem, opt);
    write_atomic(o.out / "landscape.csv", r.to_csv());
    ordered_json meta = base_meta("landscape", c, started);
    meta["columns"] = r.columns();
    meta["report"] = report_meta(r);
    meta["rows"] = r.row_count();
    write_meta(o.out, "landscape", std::move(meta), clock.seconds());
    return kExitOk;
}

int cmd_eval(const ExperimentConfig& c, const RunOptions& o) {
    const Clock clock;
    const std::string started = utc_timestamp();
    const ProblemPtr problem = build_problem(c);
    const ModelPtr model = build_model(c, problem);
    const Vec theta = model_theta(c, *model);
    ReferenceCache cache(o.out / kCacheFile);
    const ReferenceFn ref = reference_for(problem, c, cache);
    Rl2Options opt;
    opt.n_paths = c.eval.paths;
    opt.seed = c.eval.seed;
    opt.include_terminal = c.eval.include_terminal;
    const TimeGrid grid = TimeGrid::over(problem->horizon(), c.loss.n_steps);

    const Rl2Result r = evaluate_rl2(*problem, *model, theta, grid, opt, ref);
    cache.save();

    SweepReport table("knot", {"knot", "t", "rl2_step", "rl2_overall"});
    for (std::size_t k = 0; k < r.per_step.size(); ++k) {
        table.add_row({static_cast<std::int64_t>(k), grid.knot(static_cast<int>(k)), r.per_step[k], r.overall});
    }
    write_atomic(o.out / "eval.csv", table.to_csv());
    ordered_json meta = base_meta("eval", c, started);
    meta["columns"] = table.columns();
    meta["problem"] = problem->name();
    meta["model"] = model->name();
    meta["theta"] = theta_json(theta);
    meta["rl2_overall"] = r.overall;
    meta["reference"] = reference_meta(problem, c, cache);
    write_meta(o.out, "eval", std::move(meta), clock.seconds());
    log(o, "rl2 " + format_double(r.overall));
    return std::isfinite(r.overall) ? kExitOk : kExitBlowUp;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Forward-backward SDE solver experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    bool quiet = false;

    using Command = int (*)(const ExperimentConfig&, const RunOptions&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"verify", "Run the numerical self-check suite", &cmd_verify},
        {"train", "Train one model and record the loss/RL2 trace", &cmd_train},
        {"sweep", "Train over skip lengths, step counts and seeds", &cmd_sweep},
        {"landscape", "Loss of theta * u* over a theta grid", &cmd_landscape},
        {"eval", "RL2 of a fixed parameter vector along forward paths", &cmd_eval},
    };
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON experiment config (defaults when omitted)");
        sub->add_option("--seed", seed, "Override seed (and the sweep seed list)");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--threads", threads, "Worker threads (0 = auto)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--quiet", quiet, "Suppress progress lines");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfigError;
    }

    ExperimentConfig config;
    try {
        if (!config_path.empty()) config = load_config(config_path);
        if (seed) {
            config.seed = *seed;
            config.seeds = {*seed};
        }
        if (out_dir) config.output = *out_dir;
        if (threads) config.threads = *threads;
        if (config.output.empty()) throw ConfigError("output directory must not be empty");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    }
    set_thread_count(config.threads);

    RunOptions opts;
    opts.out = config.output;
    opts.log = quiet ? nullptr : &err;
    for (const auto& [name, help, fn] : commands) {
        if (!app.got_subcommand(name)) continue;
        try {
            fs::create_directories(opts.out);
            return fn(config, opts);
        } catch (const ConfigError& e) {
            err << "config error: " << e.what() << '\n';
            return kExitConfigError;
        } catch (const PreconditionError& e) {
            err << "invalid input: " << e.what() << '\n';
            return kExitConfigError;
        } catch (const BlowUpError& e) {
            err << "numerical blow-up: " << e.what() << '\n';
            return kExitBlowUp;
        } catch (const NumericalDomainError& e) {
            err << "numerical failure in " << e.term() << ": " << e.what() << '\n';
            return kExitBlowUp;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitCheckFailure;
        }
    }
    return kExitConfigError;
}

}  // namespace bsde::cli
