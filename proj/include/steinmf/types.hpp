#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace steinmf {

inline constexpr const char* kVersion = "0.1.0";

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Bad shapes, unreadable files, out-of-range settings. CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN/Inf mid-computation or a failed calibration. CLI exit code 3.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structurally unusable input or result (zero matrix, empty particle set,
/// zero basis column). CLI exit code 4.
struct degenerate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A rank-R non-negative pair: basis is D x R, weights is R x N.
/// In canonical scaling every basis column sums to one.
template <typename Scalar>
struct Factorization {
    Matrix<Scalar> basis;
    Matrix<Scalar> weights;

    Index rank() const { return basis.cols(); }
    Index rows() const { return basis.rows(); }
    Index cols() const { return weights.cols(); }
};

/// Multiplicative-update solver settings. The solver itself is deterministic;
/// seeds belong to the operations that actually draw random numbers.
struct NmfConfig {
    int max_iter = 200;
    double rel_tol = 1e-4;
    double floor = 1e-12;
};

inline void validate(const NmfConfig& cfg) {
    if (cfg.max_iter < 1)
        throw config_error("NmfConfig: max_iter must be >= 1");
    if (!(cfg.rel_tol > 0))
        throw config_error("NmfConfig: rel_tol must be > 0");
    if (!(cfg.floor > 0))
        throw config_error("NmfConfig: floor must be > 0");
}

template <typename Scalar>
void require_conforming(const Matrix<Scalar>& data, const Factorization<Scalar>& f,
                        const char* where) {
    if (f.basis.cols() != f.weights.rows())
        throw config_error(std::string(where) + ": basis/weights rank mismatch");
    if (data.rows() != f.basis.rows() || data.cols() != f.weights.cols())
        throw config_error(std::string(where) + ": factorization does not conform to data shape");
}

template <typename Scalar>
void require_mask_shape(const Matrix<Scalar>& data, const Matrix<Scalar>* mask,
                        const char* where) {
    if (mask && (mask->rows() != data.rows() || mask->cols() != data.cols()))
        throw config_error(std::string(where) + ": mask shape does not match data");
}

/// Checks the observation-mask invariants: entries in {0,1} and at least one
/// observed entry in every row and every column.
template <typename Scalar>
void validate_mask(const Matrix<Scalar>& mask) {
    for (Index j = 0; j < mask.cols(); ++j)
        for (Index i = 0; i < mask.rows(); ++i) {
            const Scalar v = mask(i, j);
            if (v != Scalar(0) && v != Scalar(1))
                throw config_error("mask entries must be 0 or 1");
        }
    for (Index i = 0; i < mask.rows(); ++i)
        if (mask.row(i).sum() == Scalar(0))
            throw degenerate_error("mask row " + std::to_string(i) + " has no observed entry");
    for (Index j = 0; j < mask.cols(); ++j)
        if (mask.col(j).sum() == Scalar(0))
            throw degenerate_error("mask column " + std::to_string(j) + " has no observed entry");
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stable per-stream seed derivation from a master seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

namespace detail {

// Deterministic column-major fills; normal draws happen in double regardless
// of Scalar so float and double instantiations see the same stream.
template <typename Scalar>
Matrix<Scalar> normal_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<Scalar> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = static_cast<Scalar>(normal(rng));
    return m;
}

template <typename Scalar>
Matrix<Scalar> abs_normal_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    return normal_matrix<Scalar>(rng, rows, cols).cwiseAbs();
}

template <typename Scalar>
Matrix<Scalar> uniform_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo, double hi) {
    std::uniform_real_distribution<double> uniform(lo, hi);
    Matrix<Scalar> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = static_cast<Scalar>(uniform(rng));
    return m;
}

} // namespace detail

} // namespace steinmf
