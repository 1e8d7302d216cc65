#include "config.hpp"

#include "bsdekit/errors.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace bsde::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config key '" + path + "': " + what);
}

void read_value(const json& j, const std::string& path, double& out) {
    if (!j.is_number()) fail(path, "expected a number");
    out = j.get<double>();
}

void read_value(const json& j, const std::string& path, int& out) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        fail(path, "integer out of range");
    }
    out = static_cast<int>(v);
}

void read_value(const json& j, const std::string& path, std::int64_t& out) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    out = j.get<std::int64_t>();
}

void read_value(const json& j, const std::string& path, std::uint64_t& out) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        fail(path, "expected a non-negative integer");
    }
    out = j.get<std::uint64_t>();
}

void read_value(const json& j, const std::string& path, bool& out) {
    if (!j.is_boolean()) fail(path, "expected true or false");
    out = j.get<bool>();
}

void read_value(const json& j, const std::string& path, std::string& out) {
    if (!j.is_string()) fail(path, "expected a string");
    out = j.get<std::string>();
}

void read_value(const json& j, const std::string& path, LrStage& out) {
    if (!j.is_array() || j.size() != 2) fail(path, "expected [until_iteration, rate]");
    read_value(j[0], path + "[0]", out.until);
    read_value(j[1], path + "[1]", out.rate);
}

template <class T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
    if (!j.is_array()) fail(path, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
        T v{};
        read_value(j[i], path + "[" + std::to_string(i) + "]", v);
        out.push_back(std::move(v));
    }
}

// Walks one object, remembering which keys were consumed.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        const auto it = j_.find(key);
        if (it != j_.end()) read_value(*it, join(path_, key), out);
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        used_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        T v{};
        read_value(*it, join(path_, key), v);
        out = std::move(v);
    }

    const json* child(const char* key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) fail(join(path_, it.key()), "unknown key");
        }
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void require_one_of(const std::string& path, const std::string& v,
                    std::initializer_list<const char*> allowed) {
    std::string list;
    for (const char* a : allowed) {
        if (v == a) return;
        if (!list.empty()) list += ", ";
        list += a;
    }
    fail(path, "'" + v + "' is not one of " + list);
}

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) fail(path, what);
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

void validate(const ExperimentConfig& c) {
    const auto names = problem_names();
    require(std::find(names.begin(), names.end(), c.problem.name) != names.end(), "problem.name",
            "unknown problem '" + c.problem.name + "'");
    require(c.problem.dim >= 1, "problem.dim", "must be positive");
    require_one_of("model.family", c.model.family, {"feature_linear", "scaled_exact"});
    require_one_of("loss.kind", c.loss.kind, {"em", "heun", "pinns", "fs_pinns"});
    require_one_of("loss.reset", c.loss.reset, {"reset", "no_reset"});
    require_one_of("loss.sampling", c.loss.sampling, {"fitted_normal", "forward_sde"});
    require(c.loss.n_steps >= 1, "loss.n_steps", "must be positive");
    require(c.loss.skip >= 1 && c.loss.skip <= c.loss.n_steps, "loss.skip", "must lie in [1, n_steps]");
    require(c.loss.batch >= 1, "loss.batch", "must be positive");
    require(c.loss.boundary_weight >= 0.0, "loss.boundary_weight", "must be non-negative");
    require(c.loss.fit_paths >= 2, "loss.fit_paths", "must be at least 2");
    require(c.optimizer.iterations >= 0, "optimizer.iterations", "must be non-negative");
    require(!c.optimizer.schedule.empty(), "optimizer.schedule", "must not be empty");
    for (std::size_t i = 0; i < c.optimizer.schedule.size(); ++i) {
        const std::string p = "optimizer.schedule[" + std::to_string(i) + "]";
        require(c.optimizer.schedule[i].rate > 0.0, p, "rate must be positive");
        require(i == 0 || c.optimizer.schedule[i].until > c.optimizer.schedule[i - 1].until, p,
                "thresholds must strictly increase");
    }
    require(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)");
    require(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)");
    require(c.optimizer.eps > 0.0, "optimizer.eps", "must be positive");
    require(c.optimizer.snapshot_every >= 0, "optimizer.snapshot_every", "must be non-negative");
    require(!c.sweep.skips.empty() && !c.sweep.n_steps.empty(), "sweep", "skips and n_steps must be non-empty");
    for (int n : c.sweep.n_steps) require(n >= 1, "sweep.n_steps", "entries must be positive");
    for (int k : c.sweep.skips) require(k >= 1, "sweep.skips", "entries must be positive");
    const int min_steps = *std::min_element(c.sweep.n_steps.begin(), c.sweep.n_steps.end());
    for (int k : c.sweep.skips) {
        require(k <= min_steps, "sweep.skips", "entry " + std::to_string(k) + " exceeds the smallest n_steps");
    }
    if (!c.landscape.problem.empty()) {
        require(std::find(names.begin(), names.end(), c.landscape.problem) != names.end(), "landscape.problem",
                "unknown problem '" + c.landscape.problem + "'");
    }
    require(c.landscape.points >= 2, "landscape.points", "must be at least 2");
    require(c.landscape.theta_max > c.landscape.theta_min, "landscape.theta_max", "must exceed theta_min");
    require(c.landscape.batch >= 1, "landscape.batch", "must be positive");
    for (double t : c.landscape.em_taus) require(t > 0.0, "landscape.em_taus", "entries must be positive");
    for (double t : c.landscape.heun_taus) require(t > 0.0, "landscape.heun_taus", "entries must be positive");
    require(c.eval.paths >= 1, "eval.paths", "must be positive");
    require(c.eval.reference_samples >= 1, "eval.reference_samples", "must be positive");
    require(c.verify.quadform_samples >= 2, "verify.quadform_samples", "must be at least 2");
    require(c.verify.probes >= 1, "verify.probes", "must be positive");
    require(c.verify.tau_samples >= 2, "verify.tau_samples", "must be at least 2");
    for (double v : {c.verify.fd_tolerance, c.verify.gradient_tolerance, c.verify.residual_tolerance,
                     c.verify.bias_tolerance, c.verify.heun_fraction}) {
        require(v >= 0.0, "verify", "tolerances must be non-negative");
    }
    require(!c.seeds.empty(), "seeds", "must not be empty");
    require(c.threads >= 0, "threads", "must be non-negative");
    require(!c.output.empty(), "output", "must not be empty");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }

    ExperimentConfig c;
    ObjectReader r(root, "");
    if (const json* j = r.child("problem")) {
        ObjectReader o(*j, "problem");
        o.get("name", c.problem.name);
        o.get("dim", c.problem.dim);
        o.get("horizon", c.problem.horizon);
        o.get("sigma", c.problem.sigma);
        o.get("rate", c.problem.rate);
        o.get("amplitude", c.problem.amplitude);
        o.get("x0", c.problem.x0);
        o.finish();
    }
    if (const json* j = r.child("model")) {
        ObjectReader o(*j, "model");
        o.get("family", c.model.family);
        o.get("theta", c.model.theta);
        o.finish();
    }
    if (const json* j = r.child("loss")) {
        ObjectReader o(*j, "loss");
        o.get("kind", c.loss.kind);
        o.get("reset", c.loss.reset);
        o.get("skip", c.loss.skip);
        o.get("n_steps", c.loss.n_steps);
        o.get("batch", c.loss.batch);
        o.get("boundary_weight", c.loss.boundary_weight);
        o.get("sampling", c.loss.sampling);
        o.get("fit_paths", c.loss.fit_paths);
        o.finish();
    }
    if (const json* j = r.child("optimizer")) {
        ObjectReader o(*j, "optimizer");
        o.get("beta1", c.optimizer.beta1);
        o.get("beta2", c.optimizer.beta2);
        o.get("eps", c.optimizer.eps);
        o.get("schedule", c.optimizer.schedule);
        o.get("iterations", c.optimizer.iterations);
        o.get("snapshot_every", c.optimizer.snapshot_every);
        o.finish();
    }
    if (const json* j = r.child("sweep")) {
        ObjectReader o(*j, "sweep");
        o.get("skips", c.sweep.skips);
        o.get("n_steps", c.sweep.n_steps);
        o.finish();
    }
    if (const json* j = r.child("landscape")) {
        ObjectReader o(*j, "landscape");
        o.get("problem", c.landscape.problem);
        o.get("theta_min", c.landscape.theta_min);
        o.get("theta_max", c.landscape.theta_max);
        o.get("points", c.landscape.points);
        o.get("em_taus", c.landscape.em_taus);
        o.get("heun_taus", c.landscape.heun_taus);
        o.get("batch", c.landscape.batch);
        o.finish();
    }
    if (const json* j = r.child("eval")) {
        ObjectReader o(*j, "eval");
        o.get("paths", c.eval.paths);
        o.get("seed", c.eval.seed);
        o.get("include_terminal", c.eval.include_terminal);
        o.get("reference_samples", c.eval.reference_samples);
        o.finish();
    }
    if (const json* j = r.child("verify")) {
        ObjectReader o(*j, "verify");
        if (const json* q = o.child("quadform_q")) {
            if (!q->is_array()) fail("verify.quadform_q", "expected an array of matrices");
            for (std::size_t i = 0; i < q->size(); ++i) {
                std::vector<std::vector<double>> m;
                read_value((*q)[i], "verify.quadform_q[" + std::to_string(i) + "]", m);
                c.verify.quadform_q.push_back(std::move(m));
            }
        }
        o.get("quadform_samples", c.verify.quadform_samples);
        o.get("probes", c.verify.probes);
        o.get("fd_tolerance", c.verify.fd_tolerance);
        o.get("gradient_tolerance", c.verify.gradient_tolerance);
        o.get("residual_tolerance", c.verify.residual_tolerance);
        o.get("bias_tolerance", c.verify.bias_tolerance);
        o.get("heun_fraction", c.verify.heun_fraction);
        o.get("tau_samples", c.verify.tau_samples);
        o.finish();
    }
    r.get("seed", c.seed);
    r.get("seeds", c.seeds);
    r.get("threads", c.threads);
    r.get("output", c.output);
    r.finish();
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

ordered_json to_json(const ExperimentConfig& c) {
    auto opt = [](const auto& o) -> ordered_json { return o ? ordered_json(*o) : ordered_json(nullptr); };
    ordered_json j;
    j["problem"] = {{"name", c.problem.name},       {"dim", c.problem.dim},
                    {"horizon", opt(c.problem.horizon)}, {"sigma", opt(c.problem.sigma)},
                    {"rate", opt(c.problem.rate)},   {"amplitude", opt(c.problem.amplitude)},
                    {"x0", opt(c.problem.x0)}};
    j["model"] = {{"family", c.model.family}, {"theta", opt(c.model.theta)}};
    j["loss"] = {{"kind", c.loss.kind},
                 {"reset", c.loss.reset},
                 {"skip", c.loss.skip},
                 {"n_steps", c.loss.n_steps},
                 {"batch", c.loss.batch},
                 {"boundary_weight", c.loss.boundary_weight},
                 {"sampling", c.loss.sampling},
                 {"fit_paths", c.loss.fit_paths}};
    ordered_json sched = ordered_json::array();
    for (const LrStage& s : c.optimizer.schedule) sched.push_back({s.until, s.rate});
    j["optimizer"] = {{"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},
                      {"schedule", sched},
                      {"iterations", c.optimizer.iterations},
                      {"snapshot_every", c.optimizer.snapshot_every}};
    j["sweep"] = {{"skips", c.sweep.skips}, {"n_steps", c.sweep.n_steps}};
    j["landscape"] = {{"problem", c.landscape.problem}, {"theta_min", c.landscape.theta_min}, {"theta_max", c.landscape.theta_max},
                      {"points", c.landscape.points},       {"em_taus", c.landscape.em_taus},
                      {"heun_taus", c.landscape.heun_taus}, {"batch", c.landscape.batch}};
    j["eval"] = {{"paths", c.eval.paths},
                 {"seed", c.eval.seed},
                 {"include_terminal", c.eval.include_terminal},
                 {"reference_samples", c.eval.reference_samples}};
    j["verify"] = {{"quadform_q", c.verify.quadform_q},
                   {"quadform_samples", c.verify.quadform_samples},
                   {"probes", c.verify.probes},
                   {"fd_tolerance", c.verify.fd_tolerance},
                   {"gradient_tolerance", c.verify.gradient_tolerance},
                   {"residual_tolerance", c.verify.residual_tolerance},
                   {"bias_tolerance", c.verify.bias_tolerance},
                   {"heun_fraction", c.verify.heun_fraction},
                   {"tau_samples", c.verify.tau_samples}};
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["threads"] = c.threads;
    j["output"] = c.output;
    return j;
}

ProblemPtr build_problem(const ExperimentConfig& c) {
    ProblemOptions o;
    o.dim = c.problem.dim;
    o.horizon = c.problem.horizon;
    o.sigma = c.problem.sigma;
    o.rate = c.problem.rate;
    o.amplitude = c.problem.amplitude;
    if (c.problem.x0) o.x0 = Eigen::Map<const Vec>(c.problem.x0->data(), static_cast<Eigen::Index>(c.problem.x0->size()));
    return make_problem(c.problem.name, o);
}

ModelPtr build_model(const ExperimentConfig& c, const ProblemPtr& problem) {
    if (c.model.family == "scaled_exact") {
        if (!problem->has_exact_solution()) {
            throw ConfigError("model.family 'scaled_exact' needs a problem with a closed form");
        }
        return std::make_shared<ScaledExact>(problem);
    }
    return std::make_shared<FeatureLinear>(problem->dim(), problem->horizon());
}

LossSpec build_loss(const ExperimentConfig& c, double horizon) {
    LossSpec s;
    if (c.loss.kind == "em") s.kind = LossKind::EM;
    if (c.loss.kind == "heun") s.kind = LossKind::Heun;
    if (c.loss.kind == "pinns") s.kind = LossKind::PINNs;
    if (c.loss.kind == "fs_pinns") s.kind = LossKind::FSPINNs;
    s.reset = c.loss.reset == "no_reset" ? ResetPolicy::NoReset : ResetPolicy::Reset;
    s.skip = c.loss.skip;
    s.grid = TimeGrid::over(horizon, c.loss.n_steps);
    s.batch = c.loss.batch;
    s.boundary_weight = c.loss.boundary_weight;
    s.sampling = c.loss.sampling == "forward_sde" ? PinnsSampling::ForwardSde : PinnsSampling::FittedNormal;
    s.fit_paths = c.loss.fit_paths;
    s.seed = c.seed;
    return s;
}

AdamConfig build_adam(const ExperimentConfig& c) {
    AdamConfig a;
    a.beta1 = c.optimizer.beta1;
    a.beta2 = c.optimizer.beta2;
    a.eps = c.optimizer.eps;
    a.schedule = c.optimizer.schedule;
    a.total_iters = c.optimizer.iterations;
    a.snapshot_every = c.optimizer.snapshot_every;
    a.seed = c.seed;
    return a;
}

Vec model_theta(const ExperimentConfig& c, const ModelFamily& model) {
    if (!c.model.theta) {
        if (c.model.family == "scaled_exact") return Vec::Ones(1);
        throw ConfigError("model.theta is required to evaluate a feature_linear model");
    }
    const auto& t = *c.model.theta;
    if (static_cast<int>(t.size()) != model.param_dim()) {
        throw ConfigError("model.theta has " + std::to_string(t.size()) + " entries, the model needs " +
                          std::to_string(model.param_dim()));
    }
    return Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size()));
}

}  // namespace bsde::cli
