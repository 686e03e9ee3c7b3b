#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "patsvd/fd_wave.hpp"
#include "patsvd/wave_profile.hpp"

namespace {

using namespace patsvd;

std::vector<double> linspace_times(int count, double horizon) {
    std::vector<double> t(count);
    for (int j = 0; j < count; ++j) t[j] = double(j + 1) * horizon / double(count);
    return t;
}

TEST(WaveProfile, CausalityBeforeWavefront) {
    const KaiserBesselLut phi = KaiserBesselLut({});
    const double d = 0.8;
    const auto times = linspace_times(60, 1.2);
    const auto p = radial_pressure_profile(d, phi, times);
    // stay clear of the derivative stencil half-width (dt/4 = 0.005)
    for (size_t j = 0; j < times.size(); ++j)
        if (times[j] + 0.006 < d - phi.params().a) EXPECT_EQ(p[j], 0.0) << "t=" << times[j];
}

TEST(WaveProfile, DecaysAfterPassage) {
    const KaiserBesselLut phi = KaiserBesselLut({});
    const double d = 0.5;
    const auto times = linspace_times(160, 3.2);
    const auto p = radial_pressure_profile(d, phi, times);
    double peak = 0.0;
    for (double v : p) peak = std::max(peak, std::abs(v));
    ASSERT_GT(peak, 0.0);
    // 2D has no sharp rear wavefront: after passage an algebraic tail
    // remains, small relative to the peak and steadily decaying
    double tail_first = 0.0, tail_last = 0.0;
    for (size_t j = 0; j < times.size(); ++j) {
        if (times[j] <= d + phi.params().a + 1.0) continue;
        const double v = std::abs(p[j]);
        EXPECT_LT(v, 0.01 * peak) << "t=" << times[j];
        if (tail_first == 0.0) tail_first = v;
        tail_last = v;
    }
    ASSERT_GT(tail_first, 0.0);
    EXPECT_LT(tail_last, 0.5 * tail_first);
}

TEST(WaveProfile, MatchesFiniteDifferenceOracle) {
    const KaiserBesselParams kb{};
    const KaiserBesselLut phi(kb);
    const double d = 0.5;
    const auto times = linspace_times(48, 1.0);
    const auto analytic = radial_pressure_profile(d, phi, times);

    FdConfig cfg;
    cfg.h = 0.0025;
    cfg.half_width = 1.6;
    auto f = [&](double x, double y) { return kaiser_bessel_eval(x, y, kb); };
    const FdTraces fd = fd_wave_solve(f, {{d, 0.0}}, times, cfg);

    double num = 0.0, den = 0.0;
    for (size_t j = 0; j < times.size(); ++j) {
        num += (analytic[j] - fd.traces[0][j]) * (analytic[j] - fd.traces[0][j]);
        den += fd.traces[0][j] * fd.traces[0][j];
    }
    ASSERT_GT(den, 0.0);
    EXPECT_LE(std::sqrt(num / den), 0.05);
}

TEST(WaveProfile, ImpossibleToleranceRaisesDiagnostic) {
    const KaiserBesselLut phi = KaiserBesselLut({});
    ProfileOptions opts;
    opts.gl_panels = 1;
    opts.omega_points = 3;
    opts.tolerance = 1e-14;
    try {
        radial_pressure_profile(0.5, phi, linspace_times(30, 1.0), opts);
        FAIL() << "expected QuadratureError";
    } catch (const QuadratureError& e) {
        EXPECT_GT(e.worst_residual, 0.0);
    }
}

TEST(WaveProfile, RejectsBadTimeGrids) {
    const KaiserBesselLut phi = KaiserBesselLut({});
    EXPECT_THROW(radial_pressure_profile(0.5, phi, {0.2, 0.2}), std::invalid_argument);
    EXPECT_THROW(radial_pressure_profile(0.5, phi, {0.3, 0.2}), std::invalid_argument);
    EXPECT_THROW(radial_pressure_profile(-0.1, phi, {0.1, 0.2}), std::invalid_argument);
}

} // namespace
