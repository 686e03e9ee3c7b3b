#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "patsvd/svd.hpp"

namespace {

using namespace patsvd;

Matrix random_matrix(int rows, int cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = gauss(rng);
    return a;
}

Vector random_vector(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    return v;
}

TEST(Svd, DiagonalMatrixByHand) {
    Matrix a = Matrix::Zero(3, 2);
    a(0, 0) = 3.0;
    a(1, 1) = 1.0;
    const SvdFactors f = svd_factorize(a);
    ASSERT_EQ(f.rank(), 2);
    EXPECT_DOUBLE_EQ(f.sigma[0], 3.0);
    EXPECT_DOUBLE_EQ(f.sigma[1], 1.0);
    // u_i/v_i pairs are +-(e_i, e_i); the product u_i v_i^T is sign-free
    for (int i = 0; i < 2; ++i) {
        EXPECT_NEAR(std::abs(f.u(i, i)), 1.0, 1e-14);
        EXPECT_NEAR(f.u.col(i).dot(f.v.col(i)) * f.u(i, i) * f.v(i, i), 1.0, 1e-14);
    }
    // A x = sum sigma_i <v_i, x> u_i
    const Vector x = random_vector(2, 1);
    Vector ax = Vector::Zero(3);
    for (int i = 0; i < f.rank(); ++i) ax += f.sigma[i] * f.v.col(i).dot(x) * f.u.col(i);
    EXPECT_LE((ax - a * x).norm(), 1e-14);
}

TEST(Svd, FactorsReconstructAndAreOrthonormal) {
    const Matrix a = random_matrix(20, 12, 42);
    const SvdFactors f = svd_factorize(a);
    ASSERT_EQ(f.rank(), 12);
    const Matrix rebuilt = f.u * f.sigma.asDiagonal() * f.v.transpose();
    EXPECT_LE((rebuilt - a).norm() / a.norm(), 1e-13);
    EXPECT_LE((f.u.transpose() * f.u - Matrix::Identity(12, 12)).norm(), 1e-13);
    EXPECT_LE((f.v.transpose() * f.v - Matrix::Identity(12, 12)).norm(), 1e-13);
    for (int i = 1; i < f.rank(); ++i) EXPECT_LE(f.sigma[i], f.sigma[i - 1]);
}

TEST(Svd, RankDeficiencyIsDetected) {
    const Matrix b = random_matrix(10, 6, 3);
    const Matrix c = random_matrix(6, 8, 4);
    const SvdFactors f = svd_factorize(b * c); // rank <= 6 by construction
    EXPECT_EQ(f.rank(), 6);
}

TEST(Svd, PseudoInverseMatchesRidgeLimitOracle) {
    // Tikhonov oracle: x_eps = (A^T A + eps I)^-1 A^T y -> A^+ y as eps -> 0,
    // with first-order error in eps removed by Richardson extrapolation.
    const Matrix b = random_matrix(12, 5, 9);
    const Matrix c = random_matrix(5, 9, 10);
    const Matrix a = b * c; // rank 5 < 9: genuinely rank-deficient
    const Vector y = random_vector(12, 11);
    const SvdFactors f = svd_factorize(a);
    ASSERT_EQ(f.rank(), 5);
    const Vector x = pseudo_inverse_apply(f, y);

    auto ridge = [&](double eps) -> Vector {
        const Matrix m = a.transpose() * a + eps * Matrix::Identity(9, 9);
        return m.ldlt().solve(a.transpose() * y);
    };
    const Vector x_eps = ridge(1e-6), x_eps2 = ridge(5e-7);
    const Vector extrapolated = 2.0 * x_eps2 - x_eps;
    EXPECT_LE((x - extrapolated).norm() / x.norm(), 1e-5);

    // Moore-Penrose identities
    const Matrix pinv = f.v * f.sigma.cwiseInverse().asDiagonal() * f.u.transpose();
    EXPECT_LE((a * pinv * a - a).norm() / a.norm(), 1e-12);
    EXPECT_LE((pinv * a * pinv - pinv).norm() / pinv.norm(), 1e-12);
    EXPECT_LE(((a * pinv).transpose() - a * pinv).norm(), 1e-12);
    EXPECT_LE(((pinv * a).transpose() - pinv * a).norm(), 1e-12);
}

TEST(Svd, TruncationByHand) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 0.5;
    const SvdFactors f = svd_factorize(a);
    Vector y(2);
    y << 4.0, 1.0;
    // alpha = 1 keeps sigma = 2 only (2^2 >= 1 > 0.5^2): x = (2, 0)
    const Vector x = tsvd_apply(f, {1.0}, y);
    EXPECT_NEAR(x[0], 2.0, 1e-14);
    EXPECT_NEAR(x[1], 0.0, 1e-14);
    EXPECT_EQ(TruncationPolicy{1.0}.kept_count(f), 1);
    // keep-boundary alpha = sigma_i^2 keeps component i
    EXPECT_EQ(TruncationPolicy{4.0}.kept_count(f), 1);
    EXPECT_EQ(TruncationPolicy{0.25}.kept_count(f), 2);
    EXPECT_EQ(TruncationPolicy::keep(f, 0).kept_count(f), 0);
    EXPECT_EQ(TruncationPolicy::keep(f, 1).kept_count(f), 1);
    EXPECT_EQ(TruncationPolicy::keep(f, 2).kept_count(f), 2);
}

TEST(Svd, TsvdMatchesBruteForceLeastSquaresOnKeptSubspace) {
    const Matrix a = random_matrix(14, 8, 21);
    const SvdFactors f = svd_factorize(a);
    const Vector y = random_vector(14, 22);
    const int k = 5;
    // brute-force oracle: least squares restricted to span(v_1..v_k)
    const Matrix basis = f.v.leftCols(k);
    const Matrix ab = a * basis;
    const Vector coeffs = (ab.transpose() * ab).ldlt().solve(ab.transpose() * y);
    const Vector oracle = basis * coeffs;
    const Vector x = tsvd_apply(f, TruncationPolicy::keep(f, k), y);
    EXPECT_LE((x - oracle).norm() / oracle.norm(), 1e-12);
}

TEST(Svd, ComplementProjectorProperties) {
    const Matrix a = random_matrix(14, 8, 31);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 3);
    const Vector z = random_vector(8, 32);
    const Vector pz = complement_project(f, policy, z);
    // idempotent
    EXPECT_LE((complement_project(f, policy, pz) - pz).norm(), 1e-13);
    // annihilates kept directions, passes orthogonal ones through
    for (int i = 0; i < 3; ++i)
        EXPECT_LE(complement_project(f, policy, f.v.col(i)).norm(), 1e-13);
    for (int i = 3; i < f.rank(); ++i)
        EXPECT_LE((complement_project(f, policy, f.v.col(i)) - f.v.col(i)).norm(), 1e-13);
    // self-adjoint: <Pz, w> = <z, Pw>
    const Vector w = random_vector(8, 33);
    EXPECT_NEAR(pz.dot(w), z.dot(complement_project(f, policy, w)), 1e-12);
}

TEST(Svd, StabilityEstimateHoldsOnRandomDraws) {
    const Matrix a = random_matrix(20, 10, 51);
    const SvdFactors f = svd_factorize(a);
    std::mt19937_64 rng(52);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const Vector x = random_vector(10, 100 + trial);
        Vector xi(20);
        for (int i = 0; i < 20; ++i) xi[i] = 0.05 * gauss(rng);
        const TruncationPolicy policy = TruncationPolicy::keep(f, 1 + trial % f.rank());
        const StabilityReport rep = stability_check(f, policy, a, x, xi);
        EXPECT_TRUE(rep.holds) << "trial " << trial << ": lhs=" << rep.lhs << " rhs=" << rep.rhs;
    }
}

TEST(Svd, SelectAlphaKeepsEverythingWithoutNoise) {
    const Matrix a = random_matrix(16, 8, 61);
    const SvdFactors f = svd_factorize(a);
    std::vector<Vector> phantoms;
    for (int i = 0; i < 4; ++i) phantoms.push_back(random_vector(8, 200 + i));
    const AlphaSelection sel = select_alpha(f, a, phantoms, 0.0, 7);
    EXPECT_EQ(sel.kept, f.rank());
    EXPECT_EQ(sel.policy.kept_count(f), f.rank());
}

TEST(Svd, SelectAlphaTruncatesUnderHeavyNoise) {
    // ill-conditioned matrix: tiny singular values amplify noise and must be cut
    Matrix a = Matrix::Zero(16, 6);
    for (int i = 0; i < 6; ++i) a(i, i) = std::pow(10.0, -double(i));
    const SvdFactors f = svd_factorize(a);
    std::vector<Vector> phantoms;
    for (int i = 0; i < 4; ++i) phantoms.push_back(random_vector(6, 300 + i));
    const AlphaSelection sel = select_alpha(f, a, phantoms, 0.2, 7);
    EXPECT_LT(sel.kept, f.rank());
    EXPECT_GT(sel.kept, 0);
}

TEST(Svd, OptimalTsvdMatchesBruteForceSweep) {
    const Matrix a = random_matrix(18, 9, 71);
    const SvdFactors f = svd_factorize(a);
    const Vector x_true = random_vector(9, 72);
    Vector y = a * x_true + 0.3 * random_vector(18, 73);
    const auto [policy, recon] = optimal_tsvd(f, y, x_true);

    // brute-force oracle: evaluate every cut point from scratch
    double best = x_true.norm();
    int best_k = 0;
    for (int k = 0; k <= f.rank(); ++k) {
        const double err = (tsvd_apply(f, TruncationPolicy::keep(f, k), y) - x_true).norm();
        if (err < best) {
            best = err;
            best_k = k;
        }
    }
    EXPECT_EQ(policy.kept_count(f), best_k);
    EXPECT_NEAR((recon - x_true).norm(), best, 1e-12);
}

TEST(Svd, RandomizedBackendAgreesOnLowRankMatrix) {
    const Matrix b = random_matrix(40, 8, 81);
    const Matrix c = random_matrix(8, 30, 82);
    const Matrix a = b * c;
    const SvdFactors exact = svd_factorize(a);
    const SvdFactors sketch = svd_factorize_randomized(a, 8, 999);
    ASSERT_EQ(sketch.rank(), exact.rank());
    EXPECT_LE((sketch.sigma - exact.sigma).norm() / exact.sigma.norm(), 1e-10);
    const Matrix rebuilt = sketch.u * sketch.sigma.asDiagonal() * sketch.v.transpose();
    EXPECT_LE((rebuilt - a).norm() / a.norm(), 1e-10);
}

TEST(Svd, RejectsBadInputs) {
    Matrix a = random_matrix(4, 3, 91);
    const SvdFactors f = svd_factorize(a);
    EXPECT_THROW(pseudo_inverse_apply(f, Vector::Zero(5)), std::invalid_argument);
    EXPECT_THROW(tsvd_apply(f, {0.0}, Vector::Zero(3)), std::invalid_argument);
    EXPECT_THROW(complement_project(f, {0.0}, Vector::Zero(4)), std::invalid_argument);
    a(1, 1) = std::nan("");
    EXPECT_THROW(svd_factorize(a), std::invalid_argument);
    EXPECT_THROW(select_alpha(f, a, {}, 0.1, 1), std::invalid_argument);
}

} // namespace
