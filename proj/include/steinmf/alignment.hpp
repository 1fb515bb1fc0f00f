#pragma once

#include "steinmf/types.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace steinmf {

/// Optimal column matching between two factorizations: permutation[i] is the
/// column of `other` matched to column i of `ref`, cost is the summed angle
/// between matched columns.
struct Alignment {
    std::vector<Index> permutation;
    double cost = 0;
};

/// Exact linear assignment (Hungarian algorithm with potentials, O(n^3)).
/// Returns assignment[i] = column assigned to row i.
template <typename Scalar>
std::vector<Index> solve_assignment(const Matrix<Scalar>& cost) {
    const Index n = cost.rows();
    if (n < 1 || cost.cols() != n)
        throw config_error("solve_assignment: cost matrix must be square and non-empty");
    if (!cost.allFinite())
        throw numeric_error("solve_assignment: non-finite cost matrix");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<Index> match(n + 1, 0), way(n + 1, 0);
    for (Index i = 1; i <= n; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const Index i0 = match[j0];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j) {
                if (used[j])
                    continue;
                const double cur = double(cost(i0 - 1, j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const Index j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
    for (Index j = 1; j <= n; ++j)
        if (match[j] != 0)
            assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return assignment;
}

/// Angle between basis columns, cosine clamped to [-1, 1] for safety at
/// near-parallel columns.
template <typename Scalar>
Matrix<Scalar> column_angle_cost(const Matrix<Scalar>& ref, const Matrix<Scalar>& other) {
    if (ref.rows() != other.rows() || ref.cols() != other.cols())
        throw config_error("column_angle_cost: shapes do not conform");
    const Index r = ref.cols();
    Matrix<Scalar> cost(r, r);
    for (Index i = 0; i < r; ++i) {
        const Scalar ni = ref.col(i).norm();
        if (!(ni > 0))
            throw degenerate_error("column_angle_cost: ref column " + std::to_string(i) +
                                   " is zero");
        for (Index j = 0; j < r; ++j) {
            const Scalar nj = other.col(j).norm();
            if (!(nj > 0))
                throw degenerate_error("column_angle_cost: other column " + std::to_string(j) +
                                       " is zero");
            const Scalar cosine =
                std::clamp(ref.col(i).dot(other.col(j)) / (ni * nj), Scalar(-1), Scalar(1));
            cost(i, j) = std::acos(cosine);
        }
    }
    return cost;
}

template <typename Scalar>
Alignment align_factorizations(const Factorization<Scalar>& ref, const Factorization<Scalar>& other) {
    if (ref.rank() != other.rank())
        throw config_error("align_factorizations: ranks differ");
    const Matrix<Scalar> cost = column_angle_cost(ref.basis, other.basis);
    Alignment out;
    out.permutation = solve_assignment(cost);
    for (Index i = 0; i < cost.rows(); ++i)
        out.cost += double(cost(i, out.permutation[static_cast<std::size_t>(i)]));
    return out;
}

} // namespace steinmf
