#pragma once

#include "steinmf/bayes.hpp"
#include "steinmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <vector>

namespace steinmf {

/// Two-block IMQ kernel parameters. The offsets c set the length scales of
/// the basis and weights blocks; exponents b must lie in (-1, 0). The derived
/// scalings gamma = (c^2)^b normalize the kernel to 1 at zero displacement.
template <typename Scalar>
struct KernelParams {
    Scalar c_basis = Scalar(1e-2);
    Scalar c_weights = Scalar(1e3);
    Scalar b_basis = Scalar(-0.5);
    Scalar b_weights = Scalar(-0.5);
};

template <typename Scalar>
void validate(const KernelParams<Scalar>& p) {
    if (!(p.c_basis > 0) || !(p.c_weights > 0))
        throw config_error("KernelParams: offsets c must be > 0");
    if (!(p.b_basis > -1 && p.b_basis < 0) || !(p.b_weights > -1 && p.b_weights < 0))
        throw config_error("KernelParams: exponents b must be in (-1, 0)");
}

/// Base-kernel evaluation bundle: the value, the gradients with respect to
/// both arguments, and the summed cross second derivative
/// sum_i d^2 k / (d theta_i d theta'_i) over both blocks.
template <typename Scalar>
struct BaseKernelEval {
    Scalar value = 0;
    Matrix<Scalar> grad1_basis, grad1_weights;
    Matrix<Scalar> grad2_basis, grad2_weights;
    Scalar cross_trace = 0;
};

namespace detail {

// One IMQ block phi(r) = (r + c^2)^b / (2 (c^2)^b) as a function of the
// squared displacement r, with its first two radial derivatives.
template <typename Scalar>
struct ImqBlock {
    Scalar value, d1, d2;
    ImqBlock(Scalar r, Scalar c, Scalar b) {
        using std::pow;
        const Scalar gamma = pow(c * c, b);
        const Scalar u = r + c * c;
        value = pow(u, b) / (2 * gamma);
        d1 = b * pow(u, b - 1) / (2 * gamma);
        d2 = b * (b - 1) * pow(u, b - 2) / (2 * gamma);
    }
};

} // namespace detail

/// Combined IMQ kernel over factorization pairs with closed-form derivatives.
template <typename Scalar>
BaseKernelEval<Scalar> base_kernel(const Factorization<Scalar>& f1, const Factorization<Scalar>& f2,
                                   const KernelParams<Scalar>& p) {
    validate(p);
    if (f1.basis.rows() != f2.basis.rows() || f1.basis.cols() != f2.basis.cols() ||
        f1.weights.rows() != f2.weights.rows() || f1.weights.cols() != f2.weights.cols())
        throw config_error("base_kernel: factorization shapes do not conform");

    const Matrix<Scalar> diff_basis = f1.basis - f2.basis;
    const Matrix<Scalar> diff_weights = f1.weights - f2.weights;
    const Scalar r_basis = diff_basis.squaredNorm();
    const Scalar r_weights = diff_weights.squaredNorm();

    const detail::ImqBlock<Scalar> block_b(r_basis, p.c_basis, p.b_basis);
    const detail::ImqBlock<Scalar> block_w(r_weights, p.c_weights, p.b_weights);

    BaseKernelEval<Scalar> out;
    out.value = block_b.value + block_w.value;
    out.grad1_basis = 2 * block_b.d1 * diff_basis;
    out.grad1_weights = 2 * block_w.d1 * diff_weights;
    out.grad2_basis = -out.grad1_basis;
    out.grad2_weights = -out.grad1_weights;
    const Scalar d_basis = Scalar(f1.basis.size());
    const Scalar d_weights = Scalar(f1.weights.size());
    out.cross_trace = -4 * r_basis * block_b.d2 - 2 * d_basis * block_b.d1 -
                      4 * r_weights * block_w.d2 - 2 * d_weights * block_w.d1;
    return out;
}

namespace detail {

template <typename Scalar>
Scalar score_dot(const ScorePair<Scalar>& a, const ScorePair<Scalar>& b) {
    return a.grad_basis.cwiseProduct(b.grad_basis).sum() +
           a.grad_weights.cwiseProduct(b.grad_weights).sum();
}

template <typename Scalar>
Scalar score_dot(const ScorePair<Scalar>& s, const Matrix<Scalar>& grad_basis,
                 const Matrix<Scalar>& grad_weights) {
    return s.grad_basis.cwiseProduct(grad_basis).sum() +
           s.grad_weights.cwiseProduct(grad_weights).sum();
}

} // namespace detail

/// Stein-modified kernel: s1's2 k + s2'grad_theta k + s1'grad_theta' k plus
/// the cross-derivative trace, all inner products running over both blocks.
template <typename Scalar>
Scalar stein_kernel(const Factorization<Scalar>& f1, const Factorization<Scalar>& f2,
                    const ScorePair<Scalar>& s1, const ScorePair<Scalar>& s2,
                    const KernelParams<Scalar>& p) {
    if (!s1.grad_basis.allFinite() || !s1.grad_weights.allFinite() ||
        !s2.grad_basis.allFinite() || !s2.grad_weights.allFinite())
        throw numeric_error("stein_kernel: non-finite score");
    const BaseKernelEval<Scalar> k = base_kernel(f1, f2, p);
    return detail::score_dot(s1, s2) * k.value +
           detail::score_dot(s2, k.grad1_basis, k.grad1_weights) +
           detail::score_dot(s1, k.grad2_basis, k.grad2_weights) + k.cross_trace;
}

/// Pairwise Stein kernel matrix; symmetric by construction.
template <typename Scalar>
Matrix<Scalar> kernel_matrix(const std::vector<Factorization<Scalar>>& particles,
                             const std::vector<ScorePair<Scalar>>& scores,
                             const KernelParams<Scalar>& p) {
    if (particles.empty())
        throw config_error("kernel_matrix: need at least one particle");
    if (particles.size() != scores.size())
        throw config_error("kernel_matrix: particle and score counts differ");
    const Index m = static_cast<Index>(particles.size());
    Matrix<Scalar> k(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = i; j < m; ++j) {
            try {
                k(i, j) = stein_kernel(particles[i], particles[j], scores[i], scores[j], p);
            } catch (const numeric_error& e) {
                throw numeric_error("kernel_matrix: entry (" + std::to_string(i) + ", " +
                                    std::to_string(j) + "): " + e.what());
            }
            k(j, i) = k(i, j);
        }
    return k;
}

/// Euclidean projection onto the probability simplex (sort-based, exact).
template <typename Scalar>
Vector<Scalar> project_to_simplex(const Vector<Scalar>& v) {
    const Index m = v.size();
    if (m < 1)
        throw config_error("project_to_simplex: empty vector");
    std::vector<Scalar> sorted(v.data(), v.data() + m);
    std::sort(sorted.begin(), sorted.end(), std::greater<Scalar>());
    Scalar running = 0;
    Scalar tau = 0;
    for (Index j = 0; j < m; ++j) {
        running += sorted[static_cast<std::size_t>(j)];
        const Scalar candidate = (running - 1) / Scalar(j + 1);
        if (sorted[static_cast<std::size_t>(j)] - candidate > 0)
            tau = candidate;
    }
    return (v.array() - tau).cwiseMax(Scalar(0));
}

template <typename Scalar>
struct SimplexSolution {
    Vector<Scalar> weights;
    Scalar objective = 0;
    int iterations = 0;
    bool converged = true;
};

/// Minimizes w' K w over the probability simplex by projected gradient with
/// step 1 / (2 |K|_2), starting from uniform weights. The step equals the
/// inverse gradient Lipschitz constant, so the objective never increases.
template <typename Scalar>
SimplexSolution<Scalar> solve_weights(const Matrix<Scalar>& kernel, int max_iter = 100000,
                                      Scalar rel_tol = Scalar(1e-10)) {
    if (kernel.rows() != kernel.cols() || kernel.rows() < 1)
        throw config_error("solve_weights: kernel matrix must be square and non-empty");
    if (!kernel.allFinite())
        throw numeric_error("solve_weights: non-finite kernel matrix");
    const Index m = kernel.rows();
    const Scalar scale = std::max(Scalar(1), kernel.cwiseAbs().maxCoeff());
    const Scalar asym = (kernel - kernel.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-6) * scale)
        throw config_error("solve_weights: kernel matrix is not symmetric");

    SimplexSolution<Scalar> out;
    if (m == 1) {
        out.weights = Vector<Scalar>::Ones(1);
        out.objective = kernel(0, 0);
        return out;
    }

    const Matrix<Scalar> sym = ((kernel + kernel.transpose()) / 2).eval();
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eigs(sym, Eigen::EigenvaluesOnly);
    const Scalar spectral_norm = eigs.eigenvalues().cwiseAbs().maxCoeff();

    Vector<Scalar> w = Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m));
    Scalar objective = w.dot(sym * w);
    if (!(spectral_norm > 0)) {
        out.weights = w;
        out.objective = objective;
        return out;
    }

    const Scalar step = 1 / (2 * spectral_norm);
    out.converged = false;
    while (out.iterations < max_iter) {
        Vector<Scalar> next = project_to_simplex<Scalar>(w - step * (2 * (sym * w)));
        const Scalar next_objective = next.dot(sym * next);
        ++out.iterations;
        const bool stalled = (next - w).norm() == 0;
        w = std::move(next);
        const Scalar denom = std::max(std::abs(objective), Scalar(1e-30));
        if (stalled || std::abs(objective - next_objective) / denom < rel_tol) {
            objective = next_objective;
            out.converged = true;
            break;
        }
        objective = next_objective;
    }
    if (!out.converged)
        std::cerr << "solve_weights: not converged after " << max_iter << " iterations\n";
    out.weights = std::move(w);
    out.objective = objective;
    return out;
}

/// Discrete Stein discrepancy w' K w; values within 1e-9 below zero are
/// rounding noise and get clipped to zero.
template <typename Scalar>
Scalar stein_discrepancy(const Matrix<Scalar>& kernel, const Vector<Scalar>& weights) {
    if (kernel.rows() != kernel.cols() || kernel.rows() != weights.size())
        throw config_error("stein_discrepancy: kernel and weight sizes do not conform");
    const Scalar value = weights.dot(kernel * weights);
    if (value < 0 && value >= Scalar(-1e-9))
        return 0;
    return value;
}

} // namespace steinmf
