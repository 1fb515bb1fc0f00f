#pragma once

#include "steinmf/nmf.hpp"
#include "steinmf/types.hpp"

#include <cmath>
#include <string>

namespace steinmf {

/// Soft insensitive loss parameters: flat below (1-beta)*epsilon, linear
/// above (1+beta)*epsilon, quadratic in between; c sharpens the likelihood.
template <typename Scalar>
struct SilfParams {
    Scalar epsilon = 1;
    Scalar beta = Scalar(0.1);
    Scalar c = 2;
};

template <typename Scalar>
void validate(const SilfParams<Scalar>& p) {
    if (!(p.epsilon > 0))
        throw config_error("SilfParams: epsilon must be > 0");
    if (!(p.beta > 0) || p.beta > 1)
        throw config_error("SilfParams: beta must be in (0, 1]");
    if (!(p.c > 0))
        throw config_error("SilfParams: c must be > 0");
}

template <typename Scalar>
Scalar silf(Scalar y, const SilfParams<Scalar>& p) {
    validate(p);
    if (y < 0)
        throw std::domain_error("silf: y must be >= 0");
    const Scalar lo = (1 - p.beta) * p.epsilon;
    const Scalar hi = (1 + p.beta) * p.epsilon;
    if (y <= lo)
        return 0;
    if (y <= hi) {
        const Scalar t = y - lo;
        return t * t / (4 * p.beta * p.epsilon);
    }
    return y - p.epsilon;
}

template <typename Scalar>
Scalar silf_grad(Scalar y, const SilfParams<Scalar>& p) {
    validate(p);
    if (y < 0)
        throw std::domain_error("silf_grad: y must be >= 0");
    const Scalar lo = (1 - p.beta) * p.epsilon;
    const Scalar hi = (1 + p.beta) * p.epsilon;
    if (y < lo)
        return 0;
    if (y <= hi) // breakpoints take the quadratic-branch value
        return (y - lo) / (2 * p.beta * p.epsilon);
    return 1;
}

enum class Objective { squared_frobenius };

/// SILF likelihood over the squared-Frobenius objective, Dirichlet(1) prior
/// on basis columns and i.i.d. exponential prior on weight entries. An empty
/// lambda_matrix broadcasts the scalar rate.
template <typename Scalar>
struct BayesModel {
    SilfParams<Scalar> silf;
    Scalar lambda = 1;
    Matrix<Scalar> lambda_matrix;
    Objective objective = Objective::squared_frobenius;
};

template <typename Scalar>
struct ScorePair {
    Matrix<Scalar> grad_basis;   // D x R
    Matrix<Scalar> grad_weights; // R x N
};

namespace detail {

// Support gate for the prior: non-negative entries, basis columns stochastic
// within tol. The tiny extra slack keeps finite-difference probes sitting
// exactly at the tolerance boundary inside the support.
template <typename Scalar>
void require_support(const Factorization<Scalar>& f, Scalar tol) {
    if (f.basis.size() == 0 || f.weights.size() == 0)
        throw config_error("bayes: empty factorization");
    if ((f.basis.array() < 0).any() || (f.weights.array() < 0).any())
        throw std::domain_error("bayes: factorization has negative entries");
    const Scalar limit = tol * (1 + Scalar(1e-3)) +
                         4 * std::numeric_limits<Scalar>::epsilon() * Scalar(f.basis.rows());
    for (Index r = 0; r < f.basis.cols(); ++r) {
        const Scalar s = f.basis.col(r).sum();
        if (std::abs(s - Scalar(1)) > limit)
            throw std::domain_error("bayes: basis column " + std::to_string(r) +
                                    " is not stochastic (sum " + std::to_string(double(s)) + ")");
    }
}

template <typename Scalar>
void require_lambda(const BayesModel<Scalar>& m, const Factorization<Scalar>& f) {
    if (m.lambda_matrix.size() != 0) {
        if (m.lambda_matrix.rows() != f.weights.rows() || m.lambda_matrix.cols() != f.weights.cols())
            throw config_error("bayes: lambda matrix shape must match weights");
        if ((m.lambda_matrix.array() <= 0).any())
            throw config_error("bayes: lambda entries must be > 0");
    } else if (!(m.lambda > 0)) {
        throw config_error("bayes: lambda must be > 0");
    }
}

} // namespace detail

/// Unnormalized log joint: -c * SILF(objective) minus the exponential prior
/// term sum(lambda .* weights). All additive constants are dropped and the
/// Dirichlet(1) prior contributes zero on its support.
template <typename Scalar>
Scalar log_joint(const Matrix<Scalar>& data, const Factorization<Scalar>& f,
                 const BayesModel<Scalar>& m, const Matrix<Scalar>* mask = nullptr,
                 Scalar support_tol = Scalar(1e-6)) {
    validate(m.silf);
    detail::require_support(f, support_tol);
    detail::require_lambda(m, f);
    const Scalar objective = frobenius_objective(data, f, mask);
    Scalar value = -m.silf.c * silf(objective, m.silf);
    if (m.lambda_matrix.size() != 0)
        value -= m.lambda_matrix.cwiseProduct(f.weights).sum();
    else
        value -= m.lambda * f.weights.sum();
    return value;
}

/// Ambient-coordinate gradient of the unnormalized log joint with respect to
/// basis and weights. The Dirichlet(1) prior adds nothing.
template <typename Scalar>
ScorePair<Scalar> score(const Matrix<Scalar>& data, const Factorization<Scalar>& f,
                        const BayesModel<Scalar>& m, const Matrix<Scalar>* mask = nullptr,
                        Scalar support_tol = Scalar(1e-6)) {
    validate(m.silf);
    require_conforming(data, f, "score");
    require_mask_shape(data, mask, "score");
    detail::require_support(f, support_tol);
    detail::require_lambda(m, f);

    Matrix<Scalar> residual = f.basis * f.weights - data;
    if (mask)
        residual = mask->cwiseProduct(residual).eval();
    const Scalar objective = residual.squaredNorm();
    const Scalar coeff = -2 * m.silf.c * silf_grad(objective, m.silf);

    ScorePair<Scalar> s;
    s.grad_basis = coeff * residual * f.weights.transpose();
    s.grad_weights = coeff * f.basis.transpose() * residual;
    if (m.lambda_matrix.size() != 0)
        s.grad_weights -= m.lambda_matrix;
    else
        s.grad_weights.array() -= m.lambda;
    if (!s.grad_basis.allFinite() || !s.grad_weights.allFinite())
        throw numeric_error("score: non-finite gradient");
    return s;
}

/// Empirical insensitivity threshold: 1.2 times the worst objective among
/// n_runs randomly initialized solves.
template <typename Scalar>
Scalar calibrate_epsilon(const Matrix<Scalar>& data, Index rank, int n_runs, std::uint64_t seed,
                         const NmfConfig& cfg = {}, const Matrix<Scalar>* mask = nullptr) {
    if (n_runs < 1)
        throw config_error("calibrate_epsilon: n_runs must be >= 1");
    Scalar worst = -1;
    int failures = 0;
    std::string last_reason;
    for (int i = 0; i < n_runs; ++i) {
        try {
            const auto result =
                nmf_solve(data, random_init(data, rank, derive_seed(seed, i)), cfg, mask);
            worst = std::max(worst, result.objective);
        } catch (const numeric_error& e) {
            ++failures;
            last_reason = e.what();
        } catch (const degenerate_error& e) {
            ++failures;
            last_reason = e.what();
        }
    }
    if (failures == n_runs)
        throw numeric_error("calibrate_epsilon: all " + std::to_string(n_runs) +
                            " runs failed; last: " + last_reason);
    return Scalar(1.2) * worst;
}

} // namespace steinmf
