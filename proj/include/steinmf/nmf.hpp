#pragma once

#include "steinmf/types.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace steinmf {

/// Squared Frobenius objective over the observed entries:
/// sum over (d, n) with mask(d, n) = 1 of (X(d, n) - (basis * weights)(d, n))^2.
/// A null mask means fully observed.
template <typename Scalar>
Scalar frobenius_objective(const Matrix<Scalar>& data, const Factorization<Scalar>& f,
                           const Matrix<Scalar>* mask = nullptr) {
    require_conforming(data, f, "frobenius_objective");
    require_mask_shape(data, mask, "frobenius_objective");
    if (mask)
        return mask->cwiseProduct(data - f.basis * f.weights).squaredNorm();
    return (data - f.basis * f.weights).squaredNorm();
}

/// One Lee-Seung multiplicative update under the masked squared-Frobenius
/// objective: weights first, then basis using the updated weights.
/// Denominators and output entries are floored to keep the iteration strictly
/// positive.
template <typename Scalar>
Factorization<Scalar> multiplicative_step(const Matrix<Scalar>& data, const Factorization<Scalar>& f,
                                          const Matrix<Scalar>* mask = nullptr,
                                          Scalar floor = Scalar(1e-12)) {
    require_conforming(data, f, "multiplicative_step");
    require_mask_shape(data, mask, "multiplicative_step");
    if (!(floor > 0))
        throw config_error("multiplicative_step: floor must be > 0");
    if (!data.allFinite() || !f.basis.allFinite() || !f.weights.allFinite())
        throw numeric_error("multiplicative_step: non-finite input");

    const Matrix<Scalar>& basis = f.basis;
    const Matrix<Scalar>& weights = f.weights;

    Matrix<Scalar> recon = basis * weights;
    Matrix<Scalar> num_w = mask ? Matrix<Scalar>(basis.transpose() * mask->cwiseProduct(data))
                                : Matrix<Scalar>(basis.transpose() * data);
    Matrix<Scalar> den_w = mask ? Matrix<Scalar>(basis.transpose() * mask->cwiseProduct(recon))
                                : Matrix<Scalar>(basis.transpose() * recon);
    Matrix<Scalar> new_weights =
        weights.cwiseProduct(num_w.cwiseQuotient(den_w.cwiseMax(floor))).cwiseMax(floor);

    recon = basis * new_weights;
    Matrix<Scalar> num_b = mask ? Matrix<Scalar>(mask->cwiseProduct(data) * new_weights.transpose())
                                : Matrix<Scalar>(data * new_weights.transpose());
    Matrix<Scalar> den_b = mask ? Matrix<Scalar>(mask->cwiseProduct(recon) * new_weights.transpose())
                                : Matrix<Scalar>(recon * new_weights.transpose());
    Matrix<Scalar> new_basis =
        basis.cwiseProduct(num_b.cwiseQuotient(den_b.cwiseMax(floor))).cwiseMax(floor);

    return {std::move(new_basis), std::move(new_weights)};
}

/// Rescales each basis column to unit sum and folds the scale into the
/// matching weights row; the product basis * weights is preserved. Columns
/// already within a few ulps of unit sum are left untouched, which makes the
/// operation exactly idempotent.
template <typename Scalar>
Factorization<Scalar> normalize_scaling(const Factorization<Scalar>& f) {
    if (f.basis.cols() != f.weights.rows())
        throw config_error("normalize_scaling: basis/weights rank mismatch");
    Factorization<Scalar> out = f;
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar slack = Scalar(16) * eps * Scalar(std::max<Index>(f.basis.rows(), 8));
    for (Index r = 0; r < out.basis.cols(); ++r) {
        const Scalar s = out.basis.col(r).sum();
        if (!(s > 0))
            throw degenerate_error("normalize_scaling: basis column " + std::to_string(r) +
                                   " has non-positive sum");
        if (std::abs(s - Scalar(1)) <= slack)
            continue;
        out.basis.col(r) /= s;
        out.weights.row(r) *= s;
    }
    return out;
}

/// Entrywise eta * |N(0, 1)| initialization with eta = sqrt(mean(X) / rank).
template <typename Scalar>
Factorization<Scalar> random_init(const Matrix<Scalar>& data, Index rank, std::uint64_t seed) {
    if (rank < 1)
        throw config_error("random_init: rank must be >= 1");
    if (data.size() == 0)
        throw config_error("random_init: empty data matrix");
    using std::sqrt;
    const Scalar eta = sqrt(data.mean() / Scalar(rank));
    std::mt19937_64 rng(seed);
    Factorization<Scalar> f;
    f.basis = eta * detail::abs_normal_matrix<Scalar>(rng, data.rows(), rank);
    f.weights = eta * detail::abs_normal_matrix<Scalar>(rng, rank, data.cols());
    return f;
}

template <typename Scalar>
struct NmfResult {
    Factorization<Scalar> factorization; // canonicalized
    Scalar objective = 0;                // masked squared-Frobenius value at exit
    int iterations = 0;
    double seconds = 0;
    bool converged = false;
};

/// Runs multiplicative updates until the relative objective change drops
/// below cfg.rel_tol or cfg.max_iter steps have been taken, then
/// canonicalizes. Deterministic given the init.
template <typename Scalar>
NmfResult<Scalar> nmf_solve(const Matrix<Scalar>& data, const Factorization<Scalar>& init,
                            const NmfConfig& cfg, const Matrix<Scalar>* mask = nullptr) {
    validate(cfg);
    require_conforming(data, init, "nmf_solve");
    require_mask_shape(data, mask, "nmf_solve");
    const auto start = std::chrono::steady_clock::now();

    const Scalar floor = static_cast<Scalar>(cfg.floor);
    Factorization<Scalar> f{init.basis.cwiseMax(floor), init.weights.cwiseMax(floor)};

    Scalar prev = frobenius_objective(data, f, mask);
    if (!std::isfinite(static_cast<double>(prev)))
        throw numeric_error("nmf_solve: non-finite objective at iteration 0");

    NmfResult<Scalar> result;
    while (result.iterations < cfg.max_iter) {
        f = multiplicative_step(data, f, mask, floor);
        ++result.iterations;
        const Scalar obj = frobenius_objective(data, f, mask);
        if (!std::isfinite(static_cast<double>(obj)))
            throw numeric_error("nmf_solve: non-finite objective at iteration " +
                                std::to_string(result.iterations));
        const Scalar denom = std::max(prev, std::numeric_limits<Scalar>::min());
        if (std::abs(prev - obj) / denom < static_cast<Scalar>(cfg.rel_tol)) {
            prev = obj;
            result.converged = true;
            break;
        }
        prev = obj;
    }

    result.factorization = normalize_scaling(f);
    result.objective = frobenius_objective(data, result.factorization, mask);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace steinmf
