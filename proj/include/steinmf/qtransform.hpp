#pragma once

#include "steinmf/nmf.hpp"
#include "steinmf/types.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace steinmf {

/// Recipe for a small synthetic dataset: |N(0,1)| factors of the given rank
/// plus additive Gaussian noise, truncated so the result stays non-negative.
struct SyntheticSpec {
    Index rows = 12;
    Index cols = 12;
    Index rank = 3;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1)
        throw config_error("SyntheticSpec: rows and cols must be >= 1");
    if (spec.rank < 1 || spec.rank > std::min(spec.rows, spec.cols))
        throw config_error("SyntheticSpec: rank must be in [1, min(rows, cols)]");
    if (spec.noise < 0)
        throw config_error("SyntheticSpec: noise must be >= 0");
}

template <typename Scalar>
Matrix<Scalar> generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    Matrix<Scalar> basis = detail::abs_normal_matrix<Scalar>(rng, spec.rows, spec.rank);
    Matrix<Scalar> weights = detail::abs_normal_matrix<Scalar>(rng, spec.rank, spec.cols);
    Matrix<Scalar> noise = detail::normal_matrix<Scalar>(rng, spec.rows, spec.cols);
    Matrix<Scalar> data = basis * weights + static_cast<Scalar>(spec.noise) * noise;
    return data.cwiseMax(Scalar(0));
}

/// Top-R SVD factors with singular values folded into the weights block, so
/// the basis block has orthonormal columns.
template <typename Scalar>
struct SvdFactors {
    Matrix<Scalar> basis;            // D x R, orthonormal columns, sign-fixed
    Matrix<Scalar> weights;          // R x N, rows are sigma_r * v_r^T
    Vector<Scalar> singular_values;  // length R, non-increasing
};

/// Fixes the component sign ambiguity: the largest-magnitude entry of each
/// basis column is made positive (ties broken by lowest row index), and the
/// matching weights row is flipped along with it.
template <typename Scalar>
void apply_sign_convention(Matrix<Scalar>& basis, Matrix<Scalar>& weights) {
    if (basis.cols() != weights.rows())
        throw config_error("apply_sign_convention: basis/weights rank mismatch");
    for (Index r = 0; r < basis.cols(); ++r) {
        Index pivot = 0;
        Scalar best = -1;
        for (Index i = 0; i < basis.rows(); ++i) {
            const Scalar mag = std::abs(basis(i, r));
            if (mag > best) {
                best = mag;
                pivot = i;
            }
        }
        if (basis(pivot, r) < 0) {
            basis.col(r) = -basis.col(r);
            weights.row(r) = -weights.row(r);
        }
    }
}

template <typename Scalar>
SvdFactors<Scalar> truncated_svd_signed(const Matrix<Scalar>& data, Index rank) {
    if (rank < 1 || rank > std::min(data.rows(), data.cols()))
        throw config_error("truncated_svd_signed: rank must be in [1, min(rows, cols)]");
    Eigen::BDCSVD<Matrix<Scalar>> svd(data, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (!(svd.singularValues()(0) > 0))
        throw degenerate_error("truncated_svd_signed: zero matrix");
    SvdFactors<Scalar> out;
    out.basis = svd.matrixU().leftCols(rank);
    out.singular_values = svd.singularValues().head(rank);
    out.weights = out.singular_values.asDiagonal() * svd.matrixV().leftCols(rank).transpose();
    apply_sign_convention(out.basis, out.weights);
    return out;
}

/// Transfer matrices mapping SVD factors to an approximate NMF:
/// basis_map is R_SVD x R_T, weights_map is R_T x R_SVD. Provenance records
/// the synthetic-dataset seed and the restart index the pair came from.
template <typename Scalar>
struct QTransformPair {
    Matrix<Scalar> basis_map;
    Matrix<Scalar> weights_map;
    std::uint64_t seed = 0;
    int restart = 0;

    Index r_svd() const { return basis_map.rows(); }
    Index r_t() const { return basis_map.cols(); }
};

/// Least-squares core relating SVD factors to a target factorization:
/// basis_map = argmin_Q |target.basis - svd.basis * Q|_F and
/// weights_map = argmin_Q |target.weights - Q * svd.weights|_F.
template <typename Scalar>
QTransformPair<Scalar> fit_q(const SvdFactors<Scalar>& svd, const Factorization<Scalar>& target) {
    if (svd.basis.rows() != target.basis.rows() || svd.weights.cols() != target.weights.cols())
        throw config_error("fit_q: svd factors and target factorization do not conform");
    QTransformPair<Scalar> pair;
    pair.basis_map = svd.basis.colPivHouseholderQr().solve(target.basis);
    pair.weights_map = svd.weights.transpose()
                           .colPivHouseholderQr()
                           .solve(target.weights.transpose())
                           .transpose();
    return pair;
}

/// Learns one transform pair from a synthetic dataset: top-R_SVD SVD, a
/// rank-R_T NMF from a random init, then the least-squares fit between them.
template <typename Scalar>
QTransformPair<Scalar> generate_q(const Matrix<Scalar>& synthetic_data, Index r_svd, Index r_t,
                                  std::uint64_t seed, const NmfConfig& cfg = {}) {
    const Index max_rank = std::min(synthetic_data.rows(), synthetic_data.cols());
    if (r_svd < 1 || r_svd > max_rank || r_t < 1 || r_t > max_rank)
        throw config_error("generate_q: ranks must be in [1, min(rows, cols)]");
    SvdFactors<Scalar> svd = truncated_svd_signed(synthetic_data, r_svd);
    NmfResult<Scalar> nmf =
        nmf_solve(synthetic_data, random_init(synthetic_data, r_t, seed), cfg);
    return fit_q(svd, nmf.factorization);
}

/// Shapes a transformed approximation into a non-negative rank-R_NMF
/// initialization: absolute values, then either truncate extra components or
/// pad with uniform entries small enough to barely perturb the product.
template <typename Scalar>
Factorization<Scalar> init_adjust(const Matrix<Scalar>& basis_approx,
                                  const Matrix<Scalar>& weights_approx, Index r_nmf,
                                  std::uint64_t seed) {
    if (r_nmf < 1)
        throw config_error("init_adjust: r_nmf must be >= 1");
    if (basis_approx.cols() != weights_approx.rows())
        throw config_error("init_adjust: basis/weights inner dimensions differ");
    const Index r_t = basis_approx.cols();
    Factorization<Scalar> out;
    out.basis = basis_approx.cwiseAbs();
    out.weights = weights_approx.cwiseAbs();
    if (r_nmf > r_t) {
        const Index extra = r_nmf - r_t;
        const Scalar basis_scale = Scalar(1e-6) * out.basis.maxCoeff();
        const Scalar weights_scale = Scalar(1e-6) * out.weights.maxCoeff();
        std::mt19937_64 rng(seed);
        out.basis.conservativeResize(Eigen::NoChange, r_nmf);
        out.basis.rightCols(extra) = detail::uniform_matrix<Scalar>(
            rng, basis_approx.rows(), extra, 0.0, static_cast<double>(basis_scale));
        out.weights.conservativeResize(r_nmf, Eigen::NoChange);
        out.weights.bottomRows(extra) = detail::uniform_matrix<Scalar>(
            rng, extra, weights_approx.cols(), 0.0, static_cast<double>(weights_scale));
    } else if (r_nmf < r_t) {
        out.basis = out.basis.leftCols(r_nmf).eval();
        out.weights = out.weights.topRows(r_nmf).eval();
    }
    return out;
}

/// Applies a transform pair to precomputed SVD factors of a dataset.
template <typename Scalar>
Factorization<Scalar> apply_q(const SvdFactors<Scalar>& svd, const QTransformPair<Scalar>& pair,
                              Index r_nmf, std::uint64_t seed) {
    if (svd.basis.cols() != pair.r_svd())
        throw config_error("apply_q: transform pair does not match the SVD rank");
    Matrix<Scalar> basis_approx = svd.basis * pair.basis_map;
    Matrix<Scalar> weights_approx = pair.weights_map * svd.weights;
    return init_adjust(basis_approx, weights_approx, r_nmf, seed);
}

template <typename Scalar>
Factorization<Scalar> apply_q(const Matrix<Scalar>& data, const QTransformPair<Scalar>& pair,
                              Index r_svd, Index r_nmf, std::uint64_t seed) {
    if (pair.r_svd() != r_svd)
        throw config_error("apply_q: transform pair does not match the requested SVD rank");
    return apply_q(truncated_svd_signed(data, r_svd), pair, r_nmf, seed);
}

/// Builds n_pairs transform pairs from fresh synthetic datasets, `restarts`
/// NMF restarts per dataset. Pair m uses dataset m / restarts and restart
/// m % restarts, so the default 100 pairs follow the 20-datasets-by-5-restarts
/// pattern.
template <typename Scalar>
std::vector<QTransformPair<Scalar>> build_transform_library(int n_pairs, Index r_svd, Index r_t,
                                                            Index synth_rows, Index synth_cols,
                                                            double noise, int restarts,
                                                            std::uint64_t seed,
                                                            const NmfConfig& cfg = {}) {
    if (n_pairs < 1)
        throw config_error("build_transform_library: n_pairs must be >= 1");
    if (restarts < 1)
        throw config_error("build_transform_library: restarts must be >= 1");
    std::vector<QTransformPair<Scalar>> library;
    library.reserve(static_cast<std::size_t>(n_pairs));
    for (int m = 0; m < n_pairs; ++m) {
        const int dataset = m / restarts;
        const int restart = m % restarts;
        SyntheticSpec spec;
        spec.rows = synth_rows;
        spec.cols = synth_cols;
        spec.rank = r_t;
        spec.noise = noise;
        spec.seed = derive_seed(seed, static_cast<std::uint64_t>(dataset));
        Matrix<Scalar> synthetic = generate_synthetic<Scalar>(spec);
        const std::uint64_t nmf_seed =
            derive_seed(seed, 0x9d5f + static_cast<std::uint64_t>(m));
        QTransformPair<Scalar> pair = generate_q(synthetic, r_svd, r_t, nmf_seed, cfg);
        pair.seed = spec.seed;
        pair.restart = restart;
        library.push_back(std::move(pair));
    }
    return library;
}

} // namespace steinmf
