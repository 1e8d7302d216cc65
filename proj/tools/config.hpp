#pragma once

#include "bsdekit/analysis.hpp"
#include "bsdekit/losses.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/pde_suite.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bsde::cli {

struct ProblemConfig {
    std::string name = "bsb";
    int dim = 1;
    std::optional<double> horizon;
    std::optional<double> sigma;
    std::optional<double> rate;
    std::optional<double> amplitude;
    std::optional<std::vector<double>> x0;
};

struct ModelConfig {
    std::string family = "feature_linear";  ///< feature_linear | scaled_exact
    /// Explicit parameters for eval; scaled_exact defaults to [1].
    std::optional<std::vector<double>> theta;
};

struct LossConfig {
    std::string kind = "heun";  ///< em | heun | pinns | fs_pinns
    std::string reset = "reset";  ///< reset | no_reset
    int skip = 1;
    int n_steps = 50;
    int batch = 64;
    double boundary_weight = 1.0;
    std::string sampling = "fitted_normal";  ///< fitted_normal | forward_sde
    int fit_paths = 1000;
};

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<LrStage> schedule{{10000, 1e-3}, {15000, 1e-4}, {20000, 1e-5}};
    std::int64_t iterations = 20000;
    std::int64_t snapshot_every = 1000;
};

struct SweepConfig {
    std::vector<int> skips{1, 5, 10, 25, 50};
    std::vector<int> n_steps{50};
};

struct LandscapeConfig {
    /// Problem built with its defaults; empty means the `problem` section.
    std::string problem = "lqr1d";
    double theta_min = 0.5;
    double theta_max = 1.5;
    int points = 101;
    std::vector<double> em_taus{1e-1, 1e-2, 1e-3};
    std::vector<double> heun_taus{5e-1, 1e-1, 5e-2};
    int batch = 1000;
};

struct EvalConfig {
    int paths = 5;
    std::uint64_t seed = 0xe7a1;
    bool include_terminal = false;
    /// Monte-Carlo samples per reference point for problems without a closed form.
    std::int64_t reference_samples = 100000;
};

struct VerifyConfig {
    /// Extra matrices for the quadratic-form variance check.
    std::vector<std::vector<std::vector<double>>> quadform_q;
    std::int64_t quadform_samples = 1000000;
    int probes = 100;
    double fd_tolerance = 1e-6;
    double gradient_tolerance = 1e-5;
    double residual_tolerance = 1e-8;
    /// Relative tolerance of the EM plateau against its closed form.
    double bias_tolerance = 0.1;
    /// Heun normalized loss must stay below this fraction of the EM plateau.
    double heun_fraction = 0.05;
    std::int64_t tau_samples = 200000;
};

struct ExperimentConfig {
    ProblemConfig problem;
    ModelConfig model;
    LossConfig loss;
    OptimizerConfig optimizer;
    SweepConfig sweep;
    LandscapeConfig landscape;
    EvalConfig eval;
    VerifyConfig verify;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int threads = 0;
    std::string output = "out";
};

/// Parses a config document. Unknown keys, wrong types and out-of-range
/// values raise ConfigError naming the key path; syntax errors name the
/// line and column.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Full effective config, every default spelled out. parse_config(dump)
/// reproduces the same config.
nlohmann::ordered_json to_json(const ExperimentConfig& c);

/// Builders from the config.
ProblemPtr build_problem(const ExperimentConfig& c);
ModelPtr build_model(const ExperimentConfig& c, const ProblemPtr& problem);
LossSpec build_loss(const ExperimentConfig& c, double horizon);
AdamConfig build_adam(const ExperimentConfig& c);
Vec model_theta(const ExperimentConfig& c, const ModelFamily& model);

}  // namespace bsde::cli
