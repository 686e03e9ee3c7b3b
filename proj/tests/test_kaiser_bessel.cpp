#include <gtest/gtest.h>

#include <cmath>

#include "patsvd/kaiser_bessel.hpp"

namespace {

using patsvd::KaiserBesselLut;
using patsvd::KaiserBesselParams;
using patsvd::kaiser_bessel_eval;

// Independent oracle: modified Bessel function of the first kind via its
// power series, I_m(x) = sum_k (x/2)^(2k+m) / (k! (k+m)!), in long double.
long double bessel_i_series(int m, long double x) {
    long double term = 1.0L;
    for (int j = 1; j <= m; ++j) term *= (x / 2.0L) / j;
    long double sum = term;
    for (int k = 1; k < 200; ++k) {
        term *= (x / 2.0L) * (x / 2.0L) / (long double)(k) / (long double)(k + m);
        sum += term;
        if (term < sum * 1e-25L) break;
    }
    return sum;
}

long double kb_series(long double radius, const KaiserBesselParams& kb) {
    const long double r2 = radius * radius / ((long double)kb.a * kb.a);
    if (r2 > 1.0L) return 0.0L;
    const long double w = std::sqrt(1.0L - r2);
    return std::pow(w, (long double)kb.m) * bessel_i_series(kb.m, kb.gamma * w) /
           bessel_i_series(kb.m, kb.gamma);
}

TEST(KaiserBessel, CenterIsOne) {
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(0.0, 0.0, {}), 1.0);
}

TEST(KaiserBessel, SupportBoundaryIsZero) {
    const KaiserBesselParams kb{0.055, 3.0, 2};
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(kb.a, 0.0, kb), 0.0);
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(0.0, kb.a, kb), 0.0);
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(kb.a + 1e-12, 0.0, kb), 0.0);
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(10.0, 10.0, kb), 0.0);
}

TEST(KaiserBessel, HalfRadiusMatchesSeriesOracle) {
    const KaiserBesselParams kb{};
    const double oracle = double(kb_series(kb.a / 2.0L, kb));
    // frozen from the long-double series evaluation above
    EXPECT_NEAR(oracle, 0.30069230973911207, 1e-14);
    EXPECT_NEAR(kaiser_bessel_eval(kb.a / 2.0, 0.0, kb), oracle, 1e-12);
}

TEST(KaiserBessel, SeriesOracleAgreesOnSweep) {
    const KaiserBesselParams kb{0.1, 5.0, 1};
    for (int i = 0; i <= 20; ++i) {
        const double r = kb.a * double(i) / 20.0;
        EXPECT_NEAR(kaiser_bessel_eval(r, 0.0, kb), double(kb_series(r, kb)), 1e-12) << "r=" << r;
    }
}

TEST(KaiserBessel, RadialSymmetry) {
    const KaiserBesselParams kb{};
    const double r = kb.a * 0.37;
    const double v0 = kaiser_bessel_eval(r, 0.0, kb);
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(0.0, r, kb), v0);
    EXPECT_DOUBLE_EQ(kaiser_bessel_eval(r / std::sqrt(2.0), r / std::sqrt(2.0), kb), v0);
}

TEST(KaiserBessel, LutTracksExactEval) {
    const KaiserBesselParams kb{};
    const KaiserBesselLut lut(kb);
    for (int i = 0; i < 1000; ++i) {
        const double r = kb.a * double(i) / 999.0;
        EXPECT_NEAR(lut(r), kaiser_bessel_eval(r, 0.0, kb), 1e-7) << "r=" << r;
    }
    EXPECT_EQ(lut(kb.a * 1.5), 0.0);
}

TEST(KaiserBessel, ValidatesParameters) {
    EXPECT_THROW(KaiserBesselParams({-1.0, 7.0, 2}).validate(), std::invalid_argument);
    EXPECT_THROW(KaiserBesselParams({0.055, 0.0, 2}).validate(), std::invalid_argument);
    EXPECT_THROW(KaiserBesselParams({0.055, 7.0, -1}).validate(), std::invalid_argument);
}

} // namespace
