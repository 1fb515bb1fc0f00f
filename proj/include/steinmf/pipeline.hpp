#pragma once

#include "steinmf/bayes.hpp"
#include "steinmf/qtransform.hpp"
#include "steinmf/stein.hpp"
#include "steinmf/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace steinmf {

enum class InitScheme { qtransform, random_restart };

/// Full posterior-run configuration. An epsilon <= 0 in the model requests
/// automatic calibration; an empty library path makes the run build its own
/// transform pairs from synthetic data.
struct RunConfig {
    std::string data_path;
    std::string mask_path;
    std::string library_path;
    std::string output_dir;

    Index r_nmf = 3;
    Index r_svd = 3;
    Index r_t = 3;
    int particles = 5;
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::qtransform;

    BayesModel<double> model = [] {
        BayesModel<double> m;
        m.silf.epsilon = 0; // calibrate by default
        return m;
    }();
    KernelParams<double> kernel;
    NmfConfig nmf;
    int calibration_runs = 50;

    // synthetic-library knobs used when no library file is supplied
    Index synth_rows = 12;
    Index synth_cols = 12;
    double synth_noise = 0.1;
    int restarts = 5;
};

struct ParticleRecord {
    int index = 0; // originating transform pair / restart index
    double init_seconds = 0;
    double solve_seconds = 0;
    int iterations = 0;
    bool solver_converged = true;
    double init_objective = 0;
    double objective = 0;
    double log_joint = 0;
};

struct DropRecord {
    int index = 0;
    std::string reason;
};

struct RunReport {
    std::string version;
    RunConfig config;
    double epsilon = 0;
    bool epsilon_calibrated = false;
    double svd_seconds = 0;
    double completion_seconds = 0;
    std::vector<ParticleRecord> particles;
    std::vector<DropRecord> drops;
    std::vector<double> weights;
    double discrepancy = 0;
    bool qp_converged = true;
    int qp_iterations = 0;
};

/// Weighted particle approximation plus the Stein matrix it was scored with.
struct DiscretePosterior {
    std::vector<Factorization<double>> particles;
    Vector<double> weights;
    Matrix<double> kernel;
    double discrepancy = 0;
};

struct PosteriorRun {
    DiscretePosterior posterior;
    RunReport report;
};

/// In-memory pipeline: initialization (transform pairs or random restarts),
/// NMF solves, scoring, kernel matrix, simplex QP. `pairs` may be empty when
/// cfg.init is qtransform, in which case a library is built on the fly.
PosteriorRun run_posterior(const Matrix<double>& data, const Matrix<double>* mask,
                           std::vector<QTransformPair<double>> pairs, const RunConfig& cfg);

/// File-based pipeline: loads data, mask and library per the config and
/// writes the output directory when one is set.
PosteriorRun run_posterior(const RunConfig& cfg);

/// Same run with random-restart initializations in place of transform pairs.
PosteriorRun run_posterior_baseline(const RunConfig& cfg);

/// Writes weights.csv, K.csv, per-particle A_###.csv / W_###.csv and
/// report.json into dir.
void write_posterior_outputs(const std::string& dir, const PosteriorRun& run);

struct NoiseExperimentConfig {
    Index rows = 200;
    Index cols = 200;
    Index rank = 10;
    std::vector<double> noise_grid;
    int n_pairs = 20;
    std::uint64_t seed = 0;
    Index r_t = 3; // transfer rank = SVD rank for the pairs
    Index synth_rows = 12;
    Index synth_cols = 12;
    double synth_noise = 0.1;
    int restarts = 5;
    NmfConfig nmf;
};

struct NoiseRow {
    double noise = 0;
    double error_ratio = 0; // median init-error ratio, transfer / random
    double time_ratio = 0;  // median solve-time ratio, transfer / random
};

/// Plants a known low-rank signal, adds noise scaled so the noise matrix has
/// the signal's norm, and compares transfer inits against paired random
/// restarts across the noise grid.
std::vector<NoiseRow> noise_experiment(const NoiseExperimentConfig& cfg);

struct RankSweepConfig {
    Index rows = 200;
    Index cols = 200;
    Index rank = 10;
    std::vector<Index> r_t_grid;
    int n_pairs = 20;
    std::uint64_t seed = 0;
    Index synth_dim = 15;
    double synth_noise = 0.1;
    int restarts = 5;
    int reference_solves = 5;
    NmfConfig nmf;
};

struct RankSweepRow {
    Index r_t = 0;
    double median_init_error = 0;      // normalized by |X|_F
    double best_random_init_error = 0; // reference line
    double worst_nmf_error = 0;        // reference line
};

/// Learns transform libraries at each transfer rank on small synthetic data
/// and measures initialization quality on a larger fixed-rank test matrix.
std::vector<RankSweepRow> rank_sweep_experiment(const RankSweepConfig& cfg);

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
nlohmann::json report_to_json(const RunReport& report);

} // namespace steinmf
