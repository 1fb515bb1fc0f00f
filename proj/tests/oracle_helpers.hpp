#pragma once

// Test-side oracles, deliberately independent of the library code paths they
// check: plain-loop reimplementations, finite differences, pseudo-inverses
// via a different decomposition, brute-force search.

#include "steinmf/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using steinmf::Factorization;
using steinmf::Index;
using steinmf::Matrix;
using steinmf::Vector;

// Triple-loop masked squared error.
inline double masked_sq_error(const Matrix<double>& x, const Matrix<double>& a,
                              const Matrix<double>& w, const Matrix<double>* mask = nullptr) {
    double total = 0;
    for (Index d = 0; d < x.rows(); ++d)
        for (Index n = 0; n < x.cols(); ++n) {
            if (mask && (*mask)(d, n) == 0)
                continue;
            double recon = 0;
            for (Index r = 0; r < a.cols(); ++r)
                recon += a(d, r) * w(r, n);
            const double diff = x(d, n) - recon;
            total += diff * diff;
        }
    return total;
}

// Scalar-loop multiplicative update, weights first then basis, with the same
// flooring rules the solver documents.
inline Factorization<double> mu_step_scalar(const Matrix<double>& x, const Matrix<double>& a,
                                            const Matrix<double>& w,
                                            const Matrix<double>* mask = nullptr,
                                            double floor = 1e-12) {
    const Index dd = x.rows(), nn = x.cols(), rr = a.cols();
    const auto observed = [&](Index d, Index n) { return mask ? (*mask)(d, n) : 1.0; };

    Matrix<double> recon(dd, nn);
    for (Index d = 0; d < dd; ++d)
        for (Index n = 0; n < nn; ++n) {
            double s = 0;
            for (Index r = 0; r < rr; ++r)
                s += a(d, r) * w(r, n);
            recon(d, n) = s;
        }

    Matrix<double> w1(rr, nn);
    for (Index r = 0; r < rr; ++r)
        for (Index n = 0; n < nn; ++n) {
            double num = 0, den = 0;
            for (Index d = 0; d < dd; ++d) {
                num += a(d, r) * observed(d, n) * x(d, n);
                den += a(d, r) * observed(d, n) * recon(d, n);
            }
            w1(r, n) = std::max(w(r, n) * (num / std::max(den, floor)), floor);
        }

    for (Index d = 0; d < dd; ++d)
        for (Index n = 0; n < nn; ++n) {
            double s = 0;
            for (Index r = 0; r < rr; ++r)
                s += a(d, r) * w1(r, n);
            recon(d, n) = s;
        }

    Matrix<double> a1(dd, rr);
    for (Index d = 0; d < dd; ++d)
        for (Index r = 0; r < rr; ++r) {
            double num = 0, den = 0;
            for (Index n = 0; n < nn; ++n) {
                num += observed(d, n) * x(d, n) * w1(r, n);
                den += observed(d, n) * recon(d, n) * w1(r, n);
            }
            a1(d, r) = std::max(a(d, r) * (num / std::max(den, floor)), floor);
        }

    return {a1, w1};
}

inline double silf_scalar(double y, double eps, double beta) {
    const double lo = (1 - beta) * eps;
    const double hi = (1 + beta) * eps;
    if (y <= lo)
        return 0.0;
    if (y <= hi)
        return (y - lo) * (y - lo) / (4 * beta * eps);
    return y - eps;
}

// Gate-free recomputation of the unnormalized log joint.
inline double log_joint_scalar(const Matrix<double>& x, const Matrix<double>& a,
                               const Matrix<double>& w, double eps, double beta, double c,
                               double lambda, const Matrix<double>* mask = nullptr) {
    double value = -c * silf_scalar(masked_sq_error(x, a, w, mask), eps, beta);
    for (Index r = 0; r < w.rows(); ++r)
        for (Index n = 0; n < w.cols(); ++n)
            value -= lambda * w(r, n);
    return value;
}

// Moore-Penrose pseudo-inverse through a Jacobi SVD.
inline Matrix<double> pinv(const Matrix<double>& m, double tol = 1e-12) {
    Eigen::JacobiSVD<Matrix<double>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Vector<double> inv(sv.size());
    const double cutoff = tol * sv(0);
    for (Index i = 0; i < sv.size(); ++i)
        inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Plain-loop two-block IMQ kernel on stacked (basis, weights) vectors.
inline double imq_pair_value(const Vector<double>& theta1, const Vector<double>& theta2,
                             Index basis_size, double c_a, double c_w, double b_a, double b_w) {
    double r_a = 0, r_w = 0;
    for (Index i = 0; i < theta1.size(); ++i) {
        const double diff = theta1(i) - theta2(i);
        if (i < basis_size)
            r_a += diff * diff;
        else
            r_w += diff * diff;
    }
    const double gamma_a = std::pow(c_a * c_a, b_a);
    const double gamma_w = std::pow(c_w * c_w, b_w);
    return std::pow(r_a + c_a * c_a, b_a) / (2 * gamma_a) +
           std::pow(r_w + c_w * c_w, b_w) / (2 * gamma_w);
}

inline Vector<double> stack(const Matrix<double>& basis, const Matrix<double>& weights) {
    Vector<double> theta(basis.size() + weights.size());
    Index k = 0;
    for (Index j = 0; j < basis.cols(); ++j)
        for (Index i = 0; i < basis.rows(); ++i)
            theta(k++) = basis(i, j);
    for (Index j = 0; j < weights.cols(); ++j)
        for (Index i = 0; i < weights.rows(); ++i)
            theta(k++) = weights(i, j);
    return theta;
}

// Finite-difference Stein kernel built from the plain-loop base kernel:
// s1's2 k + s2' grad_theta k + s1' grad_theta' k + cross trace.
inline double stein_kernel_fd(const Vector<double>& theta1, const Vector<double>& theta2,
                              const Vector<double>& s1, const Vector<double>& s2,
                              Index basis_size, double c_a, double c_w, double b_a, double b_w,
                              double h = 1e-5) {
    const auto k = [&](const Vector<double>& t1, const Vector<double>& t2) {
        return imq_pair_value(t1, t2, basis_size, c_a, c_w, b_a, b_w);
    };
    const Index dim = theta1.size();
    double value = s1.dot(s2) * k(theta1, theta2);
    Vector<double> t1p, t1m, t2p, t2m;
    for (Index i = 0; i < dim; ++i) {
        t1p = theta1; t1p(i) += h;
        t1m = theta1; t1m(i) -= h;
        t2p = theta2; t2p(i) += h;
        t2m = theta2; t2m(i) -= h;
        const double dk1 = (k(t1p, theta2) - k(t1m, theta2)) / (2 * h);
        const double dk2 = (k(theta1, t2p) - k(theta1, t2m)) / (2 * h);
        value += s2(i) * dk1 + s1(i) * dk2;
        value += (k(t1p, t2p) - k(t1p, t2m) - k(t1m, t2p) + k(t1m, t2m)) / (4 * h * h);
    }
    return value;
}

// Exhaustive minimum-cost assignment.
inline std::pair<std::vector<Index>, double> brute_force_assignment(const Matrix<double>& cost) {
    const Index n = cost.rows();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index(0));
    std::vector<Index> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (Index i = 0; i < n; ++i)
            total += cost(i, perm[static_cast<std::size_t>(i)]);
        if (total < best_cost) {
            best_cost = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_cost};
}

// Best objective over a regular grid on the simplex (M = 2 or 3).
inline double grid_search_simplex(const Matrix<double>& k, double resolution) {
    const Index m = k.rows();
    double best = std::numeric_limits<double>::infinity();
    const auto quad = [&](const Vector<double>& w) { return w.dot(k * w); };
    if (m == 2) {
        for (double t = 0; t <= 1 + 1e-12; t += resolution) {
            Vector<double> w(2);
            w << std::min(t, 1.0), 1 - std::min(t, 1.0);
            best = std::min(best, quad(w));
        }
    } else if (m == 3) {
        for (double t1 = 0; t1 <= 1 + 1e-12; t1 += resolution)
            for (double t2 = 0; t2 + t1 <= 1 + 1e-12; t2 += resolution) {
                Vector<double> w(3);
                const double u1 = std::min(t1, 1.0);
                const double u2 = std::min(t2, 1.0 - u1);
                w << u1, u2, 1 - u1 - u2;
                best = std::min(best, quad(w));
            }
    } else {
        throw std::logic_error("grid_search_simplex supports M = 2 or 3");
    }
    return best;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    const auto ranks = [n](const std::vector<double>& v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return v[a] < v[b];
        });
        std::vector<double> rank(n);
        for (std::size_t i = 0; i < n; ++i)
            rank[order[i]] = double(i);
        return rank;
    };
    const auto rx = ranks(xs), ry = ranks(ys);
    const double mean = (double(n) - 1) / 2;
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean) * (rx[i] - mean);
        dy += (ry[i] - mean) * (ry[i] - mean);
    }
    return num / std::sqrt(dx * dy);
}

// Random factorization with basis columns in the simplex interior and
// weights bounded away from zero, safe for finite-difference probes.
inline Factorization<double> random_canonical(std::mt19937_64& rng, Index rows, Index cols,
                                              Index rank, double w_lo = 0.1, double w_hi = 1.0) {
    std::uniform_real_distribution<double> basis_dist(0.1, 1.0);
    std::uniform_real_distribution<double> weight_dist(w_lo, w_hi);
    Factorization<double> f;
    f.basis.resize(rows, rank);
    f.weights.resize(rank, cols);
    for (Index j = 0; j < rank; ++j) {
        for (Index i = 0; i < rows; ++i)
            f.basis(i, j) = basis_dist(rng);
        f.basis.col(j) /= f.basis.col(j).sum();
    }
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rank; ++i)
            f.weights(i, j) = weight_dist(rng);
    return f;
}

inline Matrix<double> random_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo,
                                    double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix<double> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = dist(rng);
    return m;
}

} // namespace oracle
