#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "patsvd/kaiser_bessel.hpp"

namespace patsvd {

/// Raised when the quadrature fails to converge at the requested tolerance.
struct QuadratureError : std::runtime_error {
    double worst_residual;
    QuadratureError(const std::string& msg, double residual)
        : std::runtime_error(msg), worst_residual(residual) {}
};

struct ProfileOptions {
    int gl_panels = 6;      ///< composite Gauss-Legendre panels over the theta range
    int omega_points = 48;  ///< trapezoid points over the circle-angle support
    double tolerance = 5e-4; ///< max allowed quadrature residual relative to the trace peak
};

namespace detail {

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr double kGlNode[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr double kGlWeight[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

/// Integral of the basis profile over the circle of radius rho centered at
/// distance d from the blob center: C(d, rho) = \int_0^{2pi} phi(|d e_1 + rho w(omega)|) d omega.
inline double circle_integral(double d, double rho, const KaiserBesselLut& phi, int omega_points) {
    const double a = phi.params().a;
    const double lo = std::abs(d - rho);
    if (lo >= a) return 0.0;
    const double prod = 2.0 * d * rho;
    if (prod < 1e-14) return 2.0 * M_PI * phi(std::max(d, rho));
    // cos(omega_max) where the circle leaves the support
    double c = (d * d + rho * rho - a * a) / prod;
    const double omega_max = (c <= -1.0) ? M_PI : std::acos(std::min(1.0, c));
    // trapezoid over [0, omega_max], doubled for the symmetric half
    const int np = omega_points;
    const double h = omega_max / double(np - 1);
    double sum = 0.0;
    for (int i = 0; i < np; ++i) {
        const double w = std::cos(double(i) * h);
        const double dist = std::sqrt(std::max(0.0, d * d + rho * rho - prod * w));
        const double v = phi(dist);
        sum += (i == 0 || i == np - 1) ? 0.5 * v : v;
    }
    return 2.0 * sum * h;
}

/// Time-integrated circular means Q(d, t) with the substitution rho = t sin(theta)
/// removing the 1/sqrt(t^2 - rho^2) endpoint singularity:
///   Q(d, t) = (1/2pi) \int_0^{pi/2} t sin(theta) C(d, t sin(theta)) d theta.
/// The pressure trace is p(d, t) = dQ/dt.
inline double integrated_means(double d, double t, const KaiserBesselLut& phi,
                               int panels, int omega_points) {
    if (t <= 0.0) return 0.0;
    const double a = phi.params().a;
    const double rho_lo = std::max(0.0, d - a);
    const double rho_hi = std::min(t, d + a);
    if (rho_hi <= rho_lo) return 0.0;
    const double th_lo = std::asin(std::min(1.0, rho_lo / t));
    const double th_hi = std::asin(std::min(1.0, rho_hi / t));
    if (th_hi <= th_lo) return 0.0;
    const double panel_w = (th_hi - th_lo) / double(panels);
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = th_lo + (double(p) + 0.5) * panel_w;
        for (int q = 0; q < 8; ++q) {
            const double theta = mid + 0.5 * panel_w * kGlNode[q];
            const double rho = t * std::sin(theta);
            sum += kGlWeight[q] * rho * circle_integral(d, rho, phi, omega_points);
        }
    }
    return sum * 0.5 * panel_w / (2.0 * M_PI);
}

} // namespace detail

/// Pressure trace p(distance, t) of the 2D wave equation (c = 1) with the
/// Kaiser-Bessel profile as initial value, evaluated on `times` via the
/// circular-means formula. The outer time derivative is taken by central
/// differences with step = (min time spacing)/4. Throws QuadratureError if
/// panel refinement does not converge below opts.tolerance (relative to the
/// trace peak).
inline std::vector<double> radial_pressure_profile(double distance, const KaiserBesselLut& phi,
                                                   const std::vector<double>& times,
                                                   const ProfileOptions& opts = {}) {
    if (distance < 0.0) throw std::invalid_argument("radial_pressure_profile: distance must be >= 0");
    if (times.empty()) return {};
    double min_dt = std::numeric_limits<double>::infinity();
    double prev = -std::numeric_limits<double>::infinity();
    for (double t : times) {
        if (!(t > prev)) throw std::invalid_argument("radial_pressure_profile: times must be strictly increasing");
        if (prev >= 0.0) min_dt = std::min(min_dt, t - prev);
        prev = t;
    }
    if (times.size() == 1) min_dt = std::max(times[0], 1e-3);
    const double h = 0.25 * min_dt;

    std::vector<double> out(times.size());
    double worst_residual = 0.0;
    double peak = 0.0;
    for (size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        const double tm = std::max(0.0, t - h);
        const double q_hi = detail::integrated_means(distance, t + h, phi, opts.gl_panels, opts.omega_points);
        const double q_lo = detail::integrated_means(distance, tm, phi, opts.gl_panels, opts.omega_points);
        const double q_hi2 = detail::integrated_means(distance, t + h, phi, 2 * opts.gl_panels, 2 * opts.omega_points);
        const double q_lo2 = detail::integrated_means(distance, tm, phi, 2 * opts.gl_panels, 2 * opts.omega_points);
        const double p = (q_hi2 - q_lo2) / (t + h - tm);
        worst_residual = std::max(worst_residual,
                                  std::abs((q_hi2 - q_lo2) - (q_hi - q_lo)) / (t + h - tm));
        out[k] = p;
        peak = std::max(peak, std::abs(p));
    }
    if (peak > 0.0 && worst_residual > opts.tolerance * peak)
        throw QuadratureError("radial_pressure_profile: quadrature residual " +
                                  std::to_string(worst_residual) + " exceeds tolerance " +
                                  std::to_string(opts.tolerance * peak),
                              worst_residual);
    return out;
}

} // namespace patsvd
