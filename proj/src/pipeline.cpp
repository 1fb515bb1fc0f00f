#include "steinmf/pipeline.hpp"

#include "steinmf/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace steinmf {

using nlohmann::json;

namespace {

// Stream ids for per-purpose seed derivation from the master seed.
constexpr std::uint64_t kCalibrationStream = 0x0ca1;
constexpr std::uint64_t kLibraryStream = 0x11b0;
constexpr std::uint64_t kCompletionStream = 0xc0fe;
constexpr std::uint64_t kParticleStream = 0x10000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> values) {
    if (values.empty())
        throw config_error("median: empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1)
        return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.particles < 1)
        throw config_error("run config: particles must be >= 1");
    if (cfg.r_nmf < 1 || cfg.r_svd < 1 || cfg.r_t < 1)
        throw config_error("run config: ranks must be >= 1");
    if (cfg.calibration_runs < 1)
        throw config_error("run config: calibration_runs must be >= 1");
    if (cfg.restarts < 1)
        throw config_error("run config: restarts must be >= 1");
    if (cfg.synth_noise < 0)
        throw config_error("run config: synth_noise must be >= 0");
    validate(cfg.nmf);
    validate(cfg.kernel);
}

void require_nonnegative_data(const Matrix<double>& data, const char* where) {
    if (data.size() == 0)
        throw config_error(std::string(where) + ": empty data matrix");
    if (!data.allFinite())
        throw numeric_error(std::string(where) + ": non-finite data entries");
    if ((data.array() < 0).any())
        throw config_error(std::string(where) + ": data matrix must be non-negative");
}

// Fills unobserved entries with the masked solver's reconstruction; observed
// entries are kept as-is.
Matrix<double> complete_matrix(const Matrix<double>& data, const Matrix<double>& mask,
                               Index rank, const NmfConfig& nmf, std::uint64_t seed) {
    const auto completion = nmf_solve(data, random_init(data, rank, seed), nmf, &mask);
    const Matrix<double> recon = completion.factorization.basis * completion.factorization.weights;
    return mask.cwiseProduct(data) + (Matrix<double>::Ones(data.rows(), data.cols()) - mask)
                                         .cwiseProduct(recon);
}

} // namespace

PosteriorRun run_posterior(const Matrix<double>& data, const Matrix<double>* mask,
                           std::vector<QTransformPair<double>> pairs, const RunConfig& cfg) {
    validate_run_config(cfg);
    require_nonnegative_data(data, "run_posterior");
    require_mask_shape(data, mask, "run_posterior");
    if (mask)
        validate_mask(*mask);

    PosteriorRun run;
    RunReport& report = run.report;
    report.version = kVersion;
    report.config = cfg;

    BayesModel<double> model = cfg.model;
    if (!(model.silf.epsilon > 0)) {
        model.silf.epsilon = calibrate_epsilon(data, cfg.r_nmf, cfg.calibration_runs,
                                               derive_seed(cfg.seed, kCalibrationStream),
                                               cfg.nmf, mask);
        report.epsilon_calibrated = true;
    }
    report.epsilon = model.silf.epsilon;

    SvdFactors<double> svd;
    if (cfg.init == InitScheme::qtransform) {
        if (pairs.empty())
            pairs = build_transform_library<double>(cfg.particles, cfg.r_svd, cfg.r_t,
                                                    cfg.synth_rows, cfg.synth_cols,
                                                    cfg.synth_noise, cfg.restarts,
                                                    derive_seed(cfg.seed, kLibraryStream),
                                                    cfg.nmf);
        if (static_cast<int>(pairs.size()) < cfg.particles)
            throw config_error("run_posterior: transform library holds " +
                               std::to_string(pairs.size()) + " pairs but " +
                               std::to_string(cfg.particles) + " particles were requested");
        for (const auto& pair : pairs)
            if (pair.r_svd() != cfg.r_svd)
                throw config_error("run_posterior: transform pair SVD rank " +
                                   std::to_string(pair.r_svd()) +
                                   " does not match configured r_svd " +
                                   std::to_string(cfg.r_svd));

        const auto svd_start = Clock::now();
        if (mask) {
            const auto completion_start = Clock::now();
            const Matrix<double> completed =
                complete_matrix(data, *mask, cfg.r_nmf, cfg.nmf,
                                derive_seed(cfg.seed, kCompletionStream));
            report.completion_seconds = seconds_since(completion_start);
            svd = truncated_svd_signed(completed, cfg.r_svd);
        } else {
            svd = truncated_svd_signed(data, cfg.r_svd);
        }
        report.svd_seconds = seconds_since(svd_start);
    }

    std::vector<ScorePair<double>> scores;
    for (int m = 0; m < cfg.particles; ++m) {
        const std::uint64_t particle_seed = derive_seed(cfg.seed, kParticleStream + m);
        try {
            const auto init_start = Clock::now();
            Factorization<double> init =
                cfg.init == InitScheme::qtransform
                    ? apply_q(svd, pairs[static_cast<std::size_t>(m)], cfg.r_nmf, particle_seed)
                    : random_init(data, cfg.r_nmf, particle_seed);
            const double init_seconds = seconds_since(init_start);
            const double init_objective = frobenius_objective(data, init, mask);

            const auto solved = nmf_solve(data, init, cfg.nmf, mask);

            ParticleRecord record;
            record.index = m;
            record.init_seconds = init_seconds;
            record.solve_seconds = solved.seconds;
            record.iterations = solved.iterations;
            record.solver_converged = solved.converged;
            record.init_objective = init_objective;
            record.objective = solved.objective;
            record.log_joint = log_joint(data, solved.factorization, model, mask);

            scores.push_back(score(data, solved.factorization, model, mask));
            run.posterior.particles.push_back(solved.factorization);
            report.particles.push_back(record);
        } catch (const numeric_error& e) {
            report.drops.push_back({m, e.what()});
            std::cerr << "run_posterior: dropped particle " << m << ": " << e.what() << "\n";
        } catch (const degenerate_error& e) {
            report.drops.push_back({m, e.what()});
            std::cerr << "run_posterior: dropped particle " << m << ": " << e.what() << "\n";
        } catch (const std::domain_error& e) {
            report.drops.push_back({m, e.what()});
            std::cerr << "run_posterior: dropped particle " << m << ": " << e.what() << "\n";
        }
    }

    const int survivors = static_cast<int>(run.posterior.particles.size());
    if (survivors < std::min(cfg.particles, 2))
        throw degenerate_error("run_posterior: only " + std::to_string(survivors) + " of " +
                               std::to_string(cfg.particles) + " particles survived");

    run.posterior.kernel = kernel_matrix(run.posterior.particles, scores, cfg.kernel);
    const auto qp = solve_weights(run.posterior.kernel);
    run.posterior.weights = qp.weights;
    run.posterior.discrepancy = stein_discrepancy(run.posterior.kernel, qp.weights);

    report.weights.assign(qp.weights.data(), qp.weights.data() + qp.weights.size());
    report.discrepancy = run.posterior.discrepancy;
    report.qp_converged = qp.converged;
    report.qp_iterations = qp.iterations;
    return run;
}

PosteriorRun run_posterior(const RunConfig& cfg) {
    if (cfg.data_path.empty())
        throw config_error("run_posterior: no data path configured");
    const Matrix<double> data = load_matrix_csv(cfg.data_path);
    Matrix<double> mask;
    const bool masked = !cfg.mask_path.empty();
    if (masked)
        mask = load_mask_csv(cfg.mask_path);

    std::vector<QTransformPair<double>> pairs;
    if (cfg.init == InitScheme::qtransform && !cfg.library_path.empty())
        pairs = load_transform_library(cfg.library_path);

    PosteriorRun run =
        run_posterior(data, masked ? &mask : nullptr, std::move(pairs), cfg);
    if (!cfg.output_dir.empty())
        write_posterior_outputs(cfg.output_dir, run);
    return run;
}

PosteriorRun run_posterior_baseline(const RunConfig& cfg) {
    RunConfig baseline = cfg;
    baseline.init = InitScheme::random_restart;
    return run_posterior(baseline);
}

void write_posterior_outputs(const std::string& dir, const PosteriorRun& run) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw config_error("write_posterior_outputs: cannot create " + dir + ": " + ec.message());

    const fs::path base(dir);
    save_vector_csv((base / "weights.csv").string(), run.posterior.weights);
    save_matrix_csv((base / "K.csv").string(), run.posterior.kernel);
    for (std::size_t m = 0; m < run.posterior.particles.size(); ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "A_%03zu.csv", m + 1);
        save_matrix_csv((base / name).string(), run.posterior.particles[m].basis);
        std::snprintf(name, sizeof(name), "W_%03zu.csv", m + 1);
        save_matrix_csv((base / name).string(), run.posterior.particles[m].weights);
    }

    std::ofstream out(base / "report.json");
    if (!out)
        throw config_error("write_posterior_outputs: cannot write report.json in " + dir);
    out << report_to_json(run.report).dump(2) << '\n';
}

std::vector<NoiseRow> noise_experiment(const NoiseExperimentConfig& cfg) {
    if (cfg.noise_grid.empty())
        throw config_error("noise_experiment: empty noise grid");
    if (cfg.rank < 1 || cfg.rank > std::min(cfg.rows, cfg.cols))
        throw config_error("noise_experiment: rank must be in [1, min(rows, cols)]");
    if (cfg.n_pairs < 1)
        throw config_error("noise_experiment: n_pairs must be >= 1");
    validate(cfg.nmf);

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    Matrix<double> basis = detail::abs_normal_matrix<double>(rng, cfg.rows, cfg.rank);
    Matrix<double> weights = detail::abs_normal_matrix<double>(rng, cfg.rank, cfg.cols);
    const Matrix<double> signal = basis * weights;

    std::mt19937_64 noise_rng(derive_seed(cfg.seed, 2));
    Matrix<double> noise = detail::normal_matrix<double>(noise_rng, cfg.rows, cfg.cols);
    noise *= signal.norm() / noise.norm();

    const auto library = build_transform_library<double>(
        cfg.n_pairs, cfg.r_t, cfg.r_t, cfg.synth_rows, cfg.synth_cols, cfg.synth_noise,
        cfg.restarts, derive_seed(cfg.seed, 3), cfg.nmf);

    std::vector<NoiseRow> table;
    for (const double eps : cfg.noise_grid) {
        if (eps < 0)
            throw config_error("noise_experiment: noise levels must be >= 0");
        const Matrix<double> data = (signal + eps * noise).cwiseMax(0.0);
        const SvdFactors<double> svd = truncated_svd_signed(data, cfg.r_t);

        std::vector<double> error_ratios, time_ratios;
        for (int m = 0; m < cfg.n_pairs; ++m) {
            const std::uint64_t pair_seed = derive_seed(cfg.seed, 0x4000 + m);
            const Factorization<double> transfer_init =
                apply_q(svd, library[static_cast<std::size_t>(m)], cfg.rank, pair_seed);
            const Factorization<double> random_start =
                random_init(data, cfg.rank, derive_seed(cfg.seed, 0x5000 + m));

            const double transfer_error =
                std::sqrt(frobenius_objective<double>(data, transfer_init));
            const double random_error =
                std::sqrt(frobenius_objective<double>(data, random_start));

            const auto transfer_solve = nmf_solve(data, transfer_init, cfg.nmf);
            const auto random_solve = nmf_solve(data, random_start, cfg.nmf);

            error_ratios.push_back(transfer_error / random_error);
            time_ratios.push_back(transfer_solve.seconds / random_solve.seconds);
        }
        table.push_back({eps, median(error_ratios), median(time_ratios)});
    }
    return table;
}

std::vector<RankSweepRow> rank_sweep_experiment(const RankSweepConfig& cfg) {
    if (cfg.r_t_grid.empty())
        throw config_error("rank_sweep_experiment: empty transfer-rank grid");
    if (cfg.rank < 1 || cfg.rank > std::min(cfg.rows, cfg.cols))
        throw config_error("rank_sweep_experiment: rank must be in [1, min(rows, cols)]");
    if (cfg.n_pairs < 1 || cfg.reference_solves < 1)
        throw config_error("rank_sweep_experiment: n_pairs and reference_solves must be >= 1");
    for (const Index r_t : cfg.r_t_grid)
        if (r_t < 1 || r_t > cfg.synth_dim || r_t > std::min(cfg.rows, cfg.cols))
            throw config_error("rank_sweep_experiment: transfer rank " + std::to_string(r_t) +
                               " out of range");
    validate(cfg.nmf);

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    const Matrix<double> basis = detail::abs_normal_matrix<double>(rng, cfg.rows, cfg.rank);
    const Matrix<double> weights = detail::abs_normal_matrix<double>(rng, cfg.rank, cfg.cols);
    const Matrix<double> data = basis * weights;
    const double data_norm = data.norm();

    double best_random = std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.n_pairs; ++i) {
        const auto init = random_init(data, cfg.rank, derive_seed(cfg.seed, 0x600 + i));
        best_random =
            std::min(best_random, std::sqrt(frobenius_objective<double>(data, init)) / data_norm);
    }

    double worst_nmf = 0;
    for (int i = 0; i < cfg.reference_solves; ++i) {
        const auto solved = nmf_solve(
            data, random_init(data, cfg.rank, derive_seed(cfg.seed, 0x700 + i)), cfg.nmf);
        worst_nmf = std::max(worst_nmf, std::sqrt(solved.objective) / data_norm);
    }

    std::vector<RankSweepRow> table;
    for (const Index r_t : cfg.r_t_grid) {
        const auto library = build_transform_library<double>(
            cfg.n_pairs, r_t, r_t, cfg.synth_dim, cfg.synth_dim, cfg.synth_noise, cfg.restarts,
            derive_seed(cfg.seed, 0x800 + static_cast<std::uint64_t>(r_t)), cfg.nmf);
        const SvdFactors<double> svd = truncated_svd_signed(data, r_t);

        std::vector<double> errors;
        for (int m = 0; m < cfg.n_pairs; ++m) {
            const auto init =
                apply_q(svd, library[static_cast<std::size_t>(m)], cfg.rank,
                        derive_seed(cfg.seed, 0x900 + static_cast<std::uint64_t>(m)));
            errors.push_back(std::sqrt(frobenius_objective<double>(data, init)) / data_norm);
        }
        table.push_back({r_t, median(errors), best_random, worst_nmf});
    }
    return table;
}

namespace {

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key)
                known = true;
        if (!known)
            throw config_error("run config: unknown key '" + item.key() + "' in " + where);
    }
}

} // namespace

RunConfig parse_run_config(const json& j) {
    if (!j.is_object())
        throw config_error("run config: expected a JSON object");
    require_known_keys(j,
                       {"data", "mask", "library", "out", "r_nmf", "r_svd", "r_t", "particles",
                        "seed", "init", "model", "kernel", "nmf", "calibration_runs", "synthetic"},
                       "top level");
    RunConfig cfg;
    try {
        cfg.data_path = j.value("data", std::string());
        cfg.mask_path = j.value("mask", std::string());
        cfg.library_path = j.value("library", std::string());
        cfg.output_dir = j.value("out", std::string());
        cfg.r_nmf = j.value("r_nmf", cfg.r_nmf);
        cfg.r_svd = j.value("r_svd", cfg.r_svd);
        cfg.r_t = j.value("r_t", cfg.r_t);
        cfg.particles = j.value("particles", cfg.particles);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.calibration_runs = j.value("calibration_runs", cfg.calibration_runs);

        const std::string init = j.value("init", std::string("qtransform"));
        if (init == "qtransform")
            cfg.init = InitScheme::qtransform;
        else if (init == "random")
            cfg.init = InitScheme::random_restart;
        else
            throw config_error("run config: init must be 'qtransform' or 'random'");

        if (j.contains("model")) {
            const json& m = j.at("model");
            require_known_keys(m, {"epsilon", "beta", "c", "lambda", "objective", "mask_path"},
                               "model");
            cfg.model.silf.epsilon = m.value("epsilon", 0.0);
            cfg.model.silf.beta = m.value("beta", cfg.model.silf.beta);
            cfg.model.silf.c = m.value("c", cfg.model.silf.c);
            cfg.model.lambda = m.value("lambda", cfg.model.lambda);
            const std::string objective =
                m.value("objective", std::string("squared_frobenius"));
            if (objective != "squared_frobenius" && objective != "frobenius")
                throw config_error("run config: only the squared_frobenius objective ships");
            if (cfg.mask_path.empty())
                cfg.mask_path = m.value("mask_path", std::string());
        }
        if (j.contains("kernel")) {
            const json& k = j.at("kernel");
            require_known_keys(k, {"c_a", "c_w", "b_a", "b_w"}, "kernel");
            cfg.kernel.c_basis = k.value("c_a", cfg.kernel.c_basis);
            cfg.kernel.c_weights = k.value("c_w", cfg.kernel.c_weights);
            cfg.kernel.b_basis = k.value("b_a", cfg.kernel.b_basis);
            cfg.kernel.b_weights = k.value("b_w", cfg.kernel.b_weights);
        }
        if (j.contains("nmf")) {
            const json& n = j.at("nmf");
            require_known_keys(n, {"max_iter", "rel_tol", "floor"}, "nmf");
            cfg.nmf.max_iter = n.value("max_iter", cfg.nmf.max_iter);
            cfg.nmf.rel_tol = n.value("rel_tol", cfg.nmf.rel_tol);
            cfg.nmf.floor = n.value("floor", cfg.nmf.floor);
        }
        if (j.contains("synthetic")) {
            const json& s = j.at("synthetic");
            require_known_keys(s, {"rows", "cols", "noise", "restarts"}, "synthetic");
            cfg.synth_rows = s.value("rows", cfg.synth_rows);
            cfg.synth_cols = s.value("cols", cfg.synth_cols);
            cfg.synth_noise = s.value("noise", cfg.synth_noise);
            cfg.restarts = s.value("restarts", cfg.restarts);
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("run config: ") + e.what());
    }
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["data"] = cfg.data_path;
    j["mask"] = cfg.mask_path;
    j["library"] = cfg.library_path;
    j["out"] = cfg.output_dir;
    j["r_nmf"] = cfg.r_nmf;
    j["r_svd"] = cfg.r_svd;
    j["r_t"] = cfg.r_t;
    j["particles"] = cfg.particles;
    j["seed"] = cfg.seed;
    j["init"] = cfg.init == InitScheme::qtransform ? "qtransform" : "random";
    j["model"] = {{"epsilon", cfg.model.silf.epsilon},
                  {"beta", cfg.model.silf.beta},
                  {"c", cfg.model.silf.c},
                  {"lambda", cfg.model.lambda},
                  {"objective", "squared_frobenius"},
                  {"mask_path", cfg.mask_path}};
    j["kernel"] = {{"c_a", cfg.kernel.c_basis},
                   {"c_w", cfg.kernel.c_weights},
                   {"b_a", cfg.kernel.b_basis},
                   {"b_w", cfg.kernel.b_weights}};
    j["nmf"] = {{"max_iter", cfg.nmf.max_iter},
                {"rel_tol", cfg.nmf.rel_tol},
                {"floor", cfg.nmf.floor}};
    j["calibration_runs"] = cfg.calibration_runs;
    j["synthetic"] = {{"rows", cfg.synth_rows},
                      {"cols", cfg.synth_cols},
                      {"noise", cfg.synth_noise},
                      {"restarts", cfg.restarts}};
    return j;
}

json report_to_json(const RunReport& report) {
    json j;
    j["version"] = report.version;
    j["config"] = run_config_to_json(report.config);
    j["epsilon"] = report.epsilon;
    j["epsilon_calibrated"] = report.epsilon_calibrated;
    j["svd_seconds"] = report.svd_seconds;
    j["completion_seconds"] = report.completion_seconds;
    json particles = json::array();
    for (const auto& p : report.particles)
        particles.push_back({{"index", p.index},
                             {"init_seconds", p.init_seconds},
                             {"solve_seconds", p.solve_seconds},
                             {"iterations", p.iterations},
                             {"solver_converged", p.solver_converged},
                             {"init_objective", p.init_objective},
                             {"objective", p.objective},
                             {"log_joint", p.log_joint}});
    j["particles"] = std::move(particles);
    json drops = json::array();
    for (const auto& d : report.drops)
        drops.push_back({{"index", d.index}, {"reason", d.reason}});
    j["drops"] = std::move(drops);
    j["weights"] = report.weights;
    j["discrepancy"] = report.discrepancy;
    j["qp_converged"] = report.qp_converged;
    j["qp_iterations"] = report.qp_iterations;
    return j;
}

} // namespace steinmf
