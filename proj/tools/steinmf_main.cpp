// Command-line front end: transform-library generation, posterior runs,
// epsilon calibration, factorization alignment and the synthetic experiments.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 degenerate run.

#include "steinmf/alignment.hpp"
#include "steinmf/io.hpp"
#include "steinmf/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using steinmf::Index;
using steinmf::RunConfig;
using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw steinmf::config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw steinmf::config_error("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_table(const std::string& path, const std::string& header,
                 const std::vector<std::vector<double>>& rows) {
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!path.empty()) {
        file.open(path);
        if (!file)
            throw steinmf::config_error("cannot write " + path);
        out = &file;
    }
    *out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0)
                *out << ',';
            *out << steinmf::format_double(row[i]);
        }
        *out << '\n';
    }
}

struct PosteriorFlags {
    std::string config_path, data, mask, library, out, init = "qtransform";
    Index r_nmf = 0, r_svd = 0, r_t = 0;
    int particles = 0, calibration_runs = 0, max_iter = 0, restarts = 0;
    std::uint64_t seed = 0;
    double epsilon = 0, beta = 0, silf_c = 0, lambda = 0;
    double c_a = 0, c_w = 0, b_a = 0, b_w = 0;
    double rel_tol = 0, floor = 0, synth_noise = 0;
    Index synth_rows = 0, synth_cols = 0;
};

void add_posterior_flags(CLI::App* cmd, PosteriorFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run config; explicit flags take precedence");
    cmd->add_option("--data", f.data, "data matrix CSV (rows = dimensions, cols = observations)");
    cmd->add_option("--mask", f.mask, "observation mask CSV of {0,1}, same shape as the data");
    cmd->add_option("--library", f.library, "transform library JSON");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--r-nmf", f.r_nmf, "factorization rank");
    cmd->add_option("--r-svd", f.r_svd, "SVD rank for transfer initialization");
    cmd->add_option("--r-t", f.r_t, "transfer rank");
    cmd->add_option("-M,--particles", f.particles, "number of particles");
    cmd->add_option("--seed", f.seed, "master seed (required for reproducibility)");
    cmd->add_option("--init", f.init, "initialization scheme: qtransform or random");
    cmd->add_option("--epsilon", f.epsilon, "SILF threshold; <= 0 calibrates from data");
    cmd->add_option("--beta", f.beta, "SILF smoothness in (0,1]");
    cmd->add_option("--silf-c", f.silf_c, "likelihood sharpness C");
    cmd->add_option("--lambda", f.lambda, "exponential prior rate");
    cmd->add_option("--c-a", f.c_a, "IMQ offset for the basis block");
    cmd->add_option("--c-w", f.c_w, "IMQ offset for the weights block");
    cmd->add_option("--b-a", f.b_a, "IMQ exponent for the basis block, in (-1,0)");
    cmd->add_option("--b-w", f.b_w, "IMQ exponent for the weights block, in (-1,0)");
    cmd->add_option("--max-iter", f.max_iter, "NMF iteration cap");
    cmd->add_option("--rel-tol", f.rel_tol, "NMF relative objective-change tolerance");
    cmd->add_option("--floor", f.floor, "positivity floor for multiplicative updates");
    cmd->add_option("--calibration-runs", f.calibration_runs, "solves used to calibrate epsilon");
    cmd->add_option("--synth-rows", f.synth_rows, "synthetic dataset rows for library fallback");
    cmd->add_option("--synth-cols", f.synth_cols, "synthetic dataset cols for library fallback");
    cmd->add_option("--synth-noise", f.synth_noise, "synthetic dataset noise scale");
    cmd->add_option("--restarts", f.restarts, "NMF restarts per synthetic dataset");
}

RunConfig merge_posterior_config(const CLI::App* cmd, const PosteriorFlags& f) {
    RunConfig cfg;
    bool config_has_seed = false;
    if (!f.config_path.empty()) {
        const json j = load_json_file(f.config_path);
        cfg = steinmf::parse_run_config(j);
        config_has_seed = j.contains("seed");
    }
    const auto set = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (set("--data")) cfg.data_path = f.data;
    if (set("--mask")) cfg.mask_path = f.mask;
    if (set("--library")) cfg.library_path = f.library;
    if (set("--out")) cfg.output_dir = f.out;
    if (set("--r-nmf")) cfg.r_nmf = f.r_nmf;
    if (set("--r-svd")) cfg.r_svd = f.r_svd;
    if (set("--r-t")) cfg.r_t = f.r_t;
    if (set("--particles")) cfg.particles = f.particles;
    if (set("--seed")) cfg.seed = f.seed;
    if (set("--init")) {
        if (f.init == "qtransform")
            cfg.init = steinmf::InitScheme::qtransform;
        else if (f.init == "random")
            cfg.init = steinmf::InitScheme::random_restart;
        else
            throw steinmf::config_error("--init must be qtransform or random");
    }
    if (set("--epsilon")) cfg.model.silf.epsilon = f.epsilon;
    if (set("--beta")) cfg.model.silf.beta = f.beta;
    if (set("--silf-c")) cfg.model.silf.c = f.silf_c;
    if (set("--lambda")) cfg.model.lambda = f.lambda;
    if (set("--c-a")) cfg.kernel.c_basis = f.c_a;
    if (set("--c-w")) cfg.kernel.c_weights = f.c_w;
    if (set("--b-a")) cfg.kernel.b_basis = f.b_a;
    if (set("--b-w")) cfg.kernel.b_weights = f.b_w;
    if (set("--max-iter")) cfg.nmf.max_iter = f.max_iter;
    if (set("--rel-tol")) cfg.nmf.rel_tol = f.rel_tol;
    if (set("--floor")) cfg.nmf.floor = f.floor;
    if (set("--calibration-runs")) cfg.calibration_runs = f.calibration_runs;
    if (set("--synth-rows")) cfg.synth_rows = f.synth_rows;
    if (set("--synth-cols")) cfg.synth_cols = f.synth_cols;
    if (set("--synth-noise")) cfg.synth_noise = f.synth_noise;
    if (set("--restarts")) cfg.restarts = f.restarts;

    if (!set("--seed") && !config_has_seed)
        throw steinmf::config_error("a seed is required: pass --seed or set it in the config");
    if (cfg.data_path.empty())
        throw steinmf::config_error("a data matrix is required: pass --data or set it in the config");
    if (cfg.output_dir.empty())
        throw steinmf::config_error("an output directory is required: pass --out or set it in the config");
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete Stein-weighted posterior approximations for Bayesian NMF"};
    app.require_subcommand(1);

    // gen-q
    auto* gen_q = app.add_subcommand("gen-q", "build a transform library from synthetic data");
    std::string gen_out;
    int gen_pairs = 100, gen_restarts = 5;
    Index gen_r_svd = 3, gen_r_t = 3, gen_rows = 12, gen_cols = 12;
    double gen_noise = 0.1;
    std::uint64_t gen_seed = 0;
    gen_q->add_option("--out", gen_out, "library JSON path")->required();
    gen_q->add_option("--pairs", gen_pairs, "number of transform pairs");
    gen_q->add_option("--r-svd", gen_r_svd, "SVD rank");
    gen_q->add_option("--r-t", gen_r_t, "transfer rank");
    gen_q->add_option("--synth-rows", gen_rows, "synthetic dataset rows");
    gen_q->add_option("--synth-cols", gen_cols, "synthetic dataset cols");
    gen_q->add_option("--noise", gen_noise, "synthetic noise scale");
    gen_q->add_option("--restarts", gen_restarts, "NMF restarts per synthetic dataset");
    gen_q->add_option("--seed", gen_seed, "master seed")->required();

    // posterior
    auto* posterior = app.add_subcommand("posterior", "run the particle posterior pipeline");
    PosteriorFlags flags;
    add_posterior_flags(posterior, flags);

    // calibrate-eps
    auto* calibrate = app.add_subcommand("calibrate-eps", "calibrate the SILF threshold from data");
    std::string cal_data, cal_mask;
    Index cal_rank = 3;
    int cal_runs = 50;
    std::uint64_t cal_seed = 0;
    calibrate->add_option("--data", cal_data, "data matrix CSV")->required();
    calibrate->add_option("--mask", cal_mask, "observation mask CSV");
    calibrate->add_option("--rank", cal_rank, "factorization rank")->required();
    calibrate->add_option("--runs", cal_runs, "number of randomly initialized solves");
    calibrate->add_option("--seed", cal_seed, "master seed")->required();

    // align
    auto* align = app.add_subcommand("align", "optimally match basis columns of two factorizations");
    std::string align_ref, align_other;
    align->add_option("--ref", align_ref, "reference basis CSV")->required();
    align->add_option("--other", align_other, "basis CSV to align")->required();

    // experiment
    auto* experiment = app.add_subcommand("experiment", "synthetic experiment harnesses");
    experiment->require_subcommand(1);

    auto* noise_cmd = experiment->add_subcommand("noise", "init quality and solve time vs noise");
    steinmf::NoiseExperimentConfig noise_cfg;
    std::string noise_out;
    noise_cmd->add_option("--rows", noise_cfg.rows, "data rows");
    noise_cmd->add_option("--cols", noise_cfg.cols, "data cols");
    noise_cmd->add_option("--rank", noise_cfg.rank, "signal rank (also the NMF rank)");
    noise_cmd->add_option("--grid", noise_cfg.noise_grid, "noise levels")
        ->delimiter(',')
        ->required();
    noise_cmd->add_option("--pairs", noise_cfg.n_pairs, "transform pairs per level");
    noise_cmd->add_option("--r-t", noise_cfg.r_t, "transfer rank = SVD rank");
    noise_cmd->add_option("--seed", noise_cfg.seed, "master seed")->required();
    noise_cmd->add_option("--out", noise_out, "output CSV (stdout when omitted)");

    auto* sweep_cmd = experiment->add_subcommand("rank-sweep", "init quality vs transfer rank");
    steinmf::RankSweepConfig sweep_cfg;
    std::string sweep_out;
    std::vector<Index> sweep_grid;
    sweep_cmd->add_option("--rows", sweep_cfg.rows, "test matrix rows");
    sweep_cmd->add_option("--cols", sweep_cfg.cols, "test matrix cols");
    sweep_cmd->add_option("--rank", sweep_cfg.rank, "test matrix rank");
    sweep_cmd->add_option("--grid", sweep_grid, "transfer ranks")->delimiter(',')->required();
    sweep_cmd->add_option("--pairs", sweep_cfg.n_pairs, "transform pairs per rank");
    sweep_cmd->add_option("--synth-dim", sweep_cfg.synth_dim, "synthetic dataset side length");
    sweep_cmd->add_option("--reference-solves", sweep_cfg.reference_solves,
                          "solves behind the worst-converged-NMF line");
    sweep_cmd->add_option("--seed", sweep_cfg.seed, "master seed")->required();
    sweep_cmd->add_option("--out", sweep_out, "output CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_q->parsed()) {
            const auto library = steinmf::build_transform_library<double>(
                gen_pairs, gen_r_svd, gen_r_t, gen_rows, gen_cols, gen_noise, gen_restarts,
                gen_seed);
            steinmf::save_transform_library(gen_out, library);
            std::cout << "wrote " << library.size() << " transform pairs to " << gen_out << "\n";
        } else if (posterior->parsed()) {
            const RunConfig cfg = merge_posterior_config(posterior, flags);
            const auto run = steinmf::run_posterior(cfg);
            std::cout << "particles: " << run.posterior.particles.size()
                      << "  dropped: " << run.report.drops.size()
                      << "  discrepancy: " << steinmf::format_double(run.posterior.discrepancy)
                      << "\noutputs in " << cfg.output_dir << "\n";
        } else if (calibrate->parsed()) {
            steinmf::Matrix<double> data = steinmf::load_matrix_csv(cal_data);
            steinmf::Matrix<double> mask;
            const bool masked = !cal_mask.empty();
            if (masked)
                mask = steinmf::load_mask_csv(cal_mask);
            const double epsilon = steinmf::calibrate_epsilon<double>(
                data, cal_rank, cal_runs, cal_seed, {}, masked ? &mask : nullptr);
            json out;
            out["epsilon"] = epsilon;
            std::cout << out.dump() << "\n";
        } else if (align->parsed()) {
            steinmf::Factorization<double> ref, other;
            ref.basis = steinmf::load_matrix_csv(align_ref);
            other.basis = steinmf::load_matrix_csv(align_other);
            ref.weights = steinmf::Matrix<double>::Zero(ref.basis.cols(), 1);
            other.weights = steinmf::Matrix<double>::Zero(other.basis.cols(), 1);
            const auto alignment = steinmf::align_factorizations(ref, other);
            json out;
            out["permutation"] = alignment.permutation;
            out["cost"] = alignment.cost;
            std::cout << out.dump() << "\n";
        } else if (noise_cmd->parsed()) {
            const auto table = steinmf::noise_experiment(noise_cfg);
            std::vector<std::vector<double>> rows;
            for (const auto& row : table)
                rows.push_back({row.noise, row.error_ratio, row.time_ratio});
            write_table(noise_out, "noise,error_ratio,time_ratio", rows);
        } else if (sweep_cmd->parsed()) {
            sweep_cfg.r_t_grid = sweep_grid;
            const auto table = steinmf::rank_sweep_experiment(sweep_cfg);
            std::vector<std::vector<double>> rows;
            for (const auto& row : table)
                rows.push_back({double(row.r_t), row.median_init_error,
                                row.best_random_init_error, row.worst_nmf_error});
            write_table(sweep_out, "r_t,median_init_error,best_random_init_error,worst_nmf_error",
                        rows);
        }
    } catch (const steinmf::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const steinmf::numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const steinmf::degenerate_error& e) {
        std::cerr << "degenerate run: " << e.what() << "\n";
        return 4;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
