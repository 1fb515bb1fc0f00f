#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle_helpers.hpp"
#include "steinmf/nmf.hpp"

#include <random>

using namespace steinmf;

namespace {

Factorization<double> positive_factorization(std::mt19937_64& rng, Index rows, Index cols,
                                             Index rank) {
    Factorization<double> f;
    f.basis = oracle::random_matrix(rng, rows, rank, 0.2, 1.5);
    f.weights = oracle::random_matrix(rng, rank, cols, 0.2, 1.5);
    return f;
}

} // namespace

TEST_CASE("frobenius objective: exact factorization gives zero") {
    std::mt19937_64 rng(11);
    auto f = positive_factorization(rng, 4, 5, 2);
    Matrix<double> x = f.basis * f.weights;
    CHECK(frobenius_objective(x, f) == 0.0);
}

TEST_CASE("frobenius objective: all-zero mask gives zero") {
    std::mt19937_64 rng(12);
    auto f = positive_factorization(rng, 3, 3, 2);
    Matrix<double> x = oracle::random_matrix(rng, 3, 3, 0.0, 2.0);
    Matrix<double> mask = Matrix<double>::Zero(3, 3);
    CHECK(frobenius_objective(x, f, &mask) == 0.0);
}

TEST_CASE("frobenius objective matches the double-loop oracle") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = positive_factorization(rng, 3, 3, 2);
        Matrix<double> x = oracle::random_matrix(rng, 3, 3, 0.0, 2.0);
        const double expected = oracle::masked_sq_error(x, f.basis, f.weights);
        CHECK(frobenius_objective(x, f) == doctest::Approx(expected).epsilon(1e-12));

        Matrix<double> mask(3, 3);
        std::bernoulli_distribution coin(0.6);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j)
                mask(i, j) = coin(rng) ? 1.0 : 0.0;
        const double expected_masked = oracle::masked_sq_error(x, f.basis, f.weights, &mask);
        CHECK(frobenius_objective(x, f, &mask) == doctest::Approx(expected_masked).epsilon(1e-12));
    }
}

TEST_CASE("frobenius objective rejects non-conforming shapes") {
    Factorization<double> f{Matrix<double>::Ones(3, 2), Matrix<double>::Ones(2, 4)};
    Matrix<double> x = Matrix<double>::Ones(3, 3);
    CHECK_THROWS_AS(frobenius_objective(x, f), config_error);
    Matrix<double> mask = Matrix<double>::Ones(2, 4);
    Matrix<double> x_ok = Matrix<double>::Ones(3, 4);
    CHECK_THROWS_AS(frobenius_objective(x_ok, f, &mask), config_error);
}

TEST_CASE("multiplicative step leaves exact factorizations fixed") {
    std::mt19937_64 rng(21);
    auto f = positive_factorization(rng, 5, 6, 3);
    Matrix<double> x = f.basis * f.weights;
    auto g = multiplicative_step(x, f);
    CHECK((g.basis - f.basis).norm() <= 1e-12 * f.basis.norm());
    CHECK((g.weights - f.weights).norm() <= 1e-12 * f.weights.norm());
}

TEST_CASE("multiplicative step matches the hand-executed update formula") {
    // The 2x2 symmetric instance: ratios are exactly one, so the step returns
    // the input; the scalar oracle confirms.
    Matrix<double> x(2, 2);
    x << 1, 0, 0, 1;
    Factorization<double> f{Matrix<double>::Constant(2, 2, 0.5),
                            Matrix<double>::Constant(2, 2, 0.5)};
    auto stepped = multiplicative_step(x, f);
    auto expected = oracle::mu_step_scalar(x, f.basis, f.weights);
    CHECK((stepped.basis - expected.basis).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((stepped.weights - expected.weights).cwiseAbs().maxCoeff() <= 1e-12);

    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = positive_factorization(rng, 4, 3, 2);
        Matrix<double> y = oracle::random_matrix(rng, 4, 3, 0.0, 2.0);
        Matrix<double> mask(4, 3);
        std::bernoulli_distribution coin(0.7);
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 3; ++j)
                mask(i, j) = coin(rng) ? 1.0 : 0.0;

        auto lib_step = multiplicative_step(y, g);
        auto orc_step = oracle::mu_step_scalar(y, g.basis, g.weights);
        CHECK((lib_step.basis - orc_step.basis).cwiseAbs().maxCoeff() <=
              1e-12 * orc_step.basis.cwiseAbs().maxCoeff());
        CHECK((lib_step.weights - orc_step.weights).cwiseAbs().maxCoeff() <=
              1e-12 * orc_step.weights.cwiseAbs().maxCoeff());

        auto lib_masked = multiplicative_step(y, g, &mask);
        auto orc_masked = oracle::mu_step_scalar(y, g.basis, g.weights, &mask);
        CHECK((lib_masked.basis - orc_masked.basis).cwiseAbs().maxCoeff() <=
              1e-12 * orc_masked.basis.cwiseAbs().maxCoeff());
        CHECK((lib_masked.weights - orc_masked.weights).cwiseAbs().maxCoeff() <=
              1e-12 * orc_masked.weights.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("multiplicative step never increases the objective") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const Index rows = 2 + Index(rng() % 5), cols = 2 + Index(rng() % 5);
        const Index rank = 1 + Index(rng() % 3);
        auto f = positive_factorization(rng, rows, cols, rank);
        Matrix<double> x = oracle::random_matrix(rng, rows, cols, 0.0, 3.0);
        const bool use_mask = trial % 2 == 0;
        Matrix<double> mask;
        if (use_mask) {
            mask.resize(rows, cols);
            std::bernoulli_distribution coin(0.7);
            for (Index i = 0; i < rows; ++i)
                for (Index j = 0; j < cols; ++j)
                    mask(i, j) = coin(rng) ? 1.0 : 0.0;
        }
        const Matrix<double>* m = use_mask ? &mask : nullptr;
        const double before = frobenius_objective(x, f, m);
        const double after = frobenius_objective(x, multiplicative_step(x, f, m), m);
        CHECK(after <= before + 1e-10 * before);
    }
}

TEST_CASE("multiplicative step rejects NaN input") {
    Factorization<double> f{Matrix<double>::Ones(2, 2), Matrix<double>::Ones(2, 2)};
    Matrix<double> x = Matrix<double>::Ones(2, 2);
    x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(multiplicative_step(x, f), numeric_error);
}

TEST_CASE("masked and unmasked paths agree under an all-ones mask") {
    std::mt19937_64 rng(24);
    auto f = positive_factorization(rng, 4, 5, 2);
    Matrix<double> x = oracle::random_matrix(rng, 4, 5, 0.0, 2.0);
    Matrix<double> ones = Matrix<double>::Ones(4, 5);
    CHECK(frobenius_objective(x, f, &ones) ==
          doctest::Approx(frobenius_objective(x, f)).epsilon(1e-12));
    auto masked = multiplicative_step(x, f, &ones);
    auto plain = multiplicative_step(x, f);
    CHECK((masked.basis - plain.basis).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((masked.weights - plain.weights).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("nmf_solve recovers rank-1 data") {
    std::mt19937_64 rng(31);
    Vector<double> a = oracle::random_matrix(rng, 40, 1, 0.5, 1.5);
    Vector<double> w = oracle::random_matrix(rng, 30, 1, 0.5, 1.5);
    Matrix<double> x = a * w.transpose();
    auto result = nmf_solve(x, random_init(x, 1, 7), NmfConfig{});
    const double rel = std::sqrt(result.objective) / x.norm();
    CHECK(rel < 1e-3);
}

TEST_CASE("nmf_solve stops immediately at a fixed point") {
    std::mt19937_64 rng(32);
    auto f = positive_factorization(rng, 5, 5, 2);
    Matrix<double> x = f.basis * f.weights;
    auto result = nmf_solve(x, f, NmfConfig{});
    CHECK(result.iterations <= 2);
    CHECK(result.converged);
}

TEST_CASE("nmf_solve is deterministic") {
    std::mt19937_64 rng(33);
    Matrix<double> x = oracle::random_matrix(rng, 12, 9, 0.0, 2.0);
    auto init = random_init(x, 3, 99);
    auto r1 = nmf_solve(x, init, NmfConfig{});
    auto r2 = nmf_solve(x, init, NmfConfig{});
    CHECK(r1.factorization.basis == r2.factorization.basis);
    CHECK(r1.factorization.weights == r2.factorization.weights);
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.objective == r2.objective);
}

TEST_CASE("random_init scale and positivity") {
    std::mt19937_64 rng(41);
    Matrix<double> x = oracle::random_matrix(rng, 50, 50, 0.0, 4.0);
    auto f = random_init(x, 10, 5);
    CHECK((f.basis.array() >= 0).all());
    CHECK((f.weights.array() >= 0).all());

    Matrix<double> zeros = Matrix<double>::Zero(4, 4);
    auto z = random_init(zeros, 2, 5);
    CHECK(z.basis.cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.weights.cwiseAbs().maxCoeff() == 0.0);

    // Half-normal mean: entries average to eta * sqrt(2/pi) over many draws.
    const double eta = std::sqrt(x.mean() / 10.0);
    double total = 0;
    std::size_t count = 0;
    for (int i = 0; i < 100; ++i) {
        auto g = random_init(x, 10, 1000 + i);
        total += g.basis.sum() + g.weights.sum();
        count += std::size_t(g.basis.size() + g.weights.size());
    }
    const double expected = eta * std::sqrt(2.0 / M_PI);
    CHECK(total / double(count) == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("normalize_scaling canonical form") {
    std::mt19937_64 rng(51);
    auto f = positive_factorization(rng, 6, 4, 3);

    auto canonical = normalize_scaling(f);
    for (Index r = 0; r < canonical.basis.cols(); ++r)
        CHECK(canonical.basis.col(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

    // product preserved
    const Matrix<double> before = f.basis * f.weights;
    const Matrix<double> after = canonical.basis * canonical.weights;
    CHECK((after - before).norm() <= 1e-12 * before.norm());

    // idempotent, bitwise
    auto twice = normalize_scaling(canonical);
    CHECK(twice.basis == canonical.basis);
    CHECK(twice.weights == canonical.weights);

    // already column-stochastic input is untouched
    auto same = normalize_scaling(canonical);
    CHECK(same.basis == canonical.basis);

    // diagonal rescaling maps to the same canonical point (powers of two are
    // exact in floating point)
    Factorization<double> scaled = f;
    scaled.basis.col(0) *= 2.0;
    scaled.weights.row(0) *= 0.5;
    scaled.basis.col(1) *= 4.0;
    scaled.weights.row(1) *= 0.25;
    auto canonical2 = normalize_scaling(scaled);
    CHECK(canonical2.basis == canonical.basis);
    CHECK(canonical2.weights == canonical.weights);
}

TEST_CASE("normalize_scaling rejects zero columns") {
    Factorization<double> f{Matrix<double>::Zero(3, 2), Matrix<double>::Ones(2, 3)};
    CHECK_THROWS_AS(normalize_scaling(f), degenerate_error);
}
