#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "patsvd/geometry.hpp"

namespace patsvd {

/// Finite-difference discretization of the free-space 2D wave equation:
/// leapfrog in time, 5-point Laplacian in space, on [-L, L]^2 with the
/// domain chosen large enough that boundary reflections never reach a
/// detector within the horizon.
struct FdConfig {
    double h = 0.005;        ///< spatial step
    double cfl = 0.6;        ///< target k/h ratio, must stay <= 1/sqrt(2)
    double half_width = 5.0; ///< domain half-width L
    double margin = 0.05;    ///< reflection safety margin

    void validate(double max_detector_radius, double horizon) const {
        if (!(h > 0.0)) throw std::invalid_argument("FdConfig: h must be > 0");
        if (!(cfl > 0.0) || cfl > 1.0 / std::sqrt(2.0) + 1e-12)
            throw std::invalid_argument("FdConfig: CFL ratio must be in (0, 1/sqrt(2)]");
        if (half_width < max_detector_radius + horizon + margin)
            throw std::invalid_argument(
                "FdConfig: half_width " + std::to_string(half_width) +
                " too small; reflections could reach a detector within the horizon (need >= " +
                std::to_string(max_detector_radius + horizon + margin) + ")");
    }
};

/// Node layout of the FD lattice: m x m nodes over [-L, L]^2, spacing h.
struct FdGrid {
    double half_width;
    double h;
    int m;

    static FdGrid from_config(const FdConfig& cfg) {
        const int m = int(std::round(2.0 * cfg.half_width / cfg.h)) + 1;
        return {cfg.half_width, 2.0 * cfg.half_width / double(m - 1), m};
    }

    double coord(int i) const { return -half_width + h * double(i); }
    size_t index(int ix, int iy) const { return size_t(iy) * m + ix; }
};

struct FdTraces {
    std::vector<std::vector<double>> traces; // [detector][time]
    double energy_initial = 0.0;
    double energy_final = 0.0;
};

/// Leapfrog solve from an initial field sampled on the FD lattice, with zero
/// initial velocity. Detector traces are bilinear samples at the requested
/// (equidistant) times; the time step divides the sample spacing exactly.
inline FdTraces fd_wave_solve_field(std::vector<double> initial, const FdGrid& g,
                                    const std::vector<Point2>& detectors,
                                    const std::vector<double>& times, const FdConfig& cfg,
                                    bool track_energy = false) {
    if (times.empty() || detectors.empty())
        throw std::invalid_argument("fd_wave_solve: need at least one detector and time");
    if (initial.size() != size_t(g.m) * g.m)
        throw std::invalid_argument("fd_wave_solve: initial field size mismatch");
    double max_radius = 0.0;
    for (const Point2& s : detectors) max_radius = std::max(max_radius, std::hypot(s.x, s.y));
    cfg.validate(max_radius, times.back());

    const double dt_sample = times.size() > 1 ? times[1] - times[0] : times[0];
    if (!(dt_sample > 0.0)) throw std::invalid_argument("fd_wave_solve: times must be positive");
    for (size_t j = 1; j < times.size(); ++j)
        if (std::abs(times[j] - times[j - 1] - dt_sample) > 1e-9 * dt_sample)
            throw std::invalid_argument("fd_wave_solve: times must be equidistant");
    if (std::abs(times[0] - dt_sample) > 1e-9 * dt_sample)
        throw std::invalid_argument("fd_wave_solve: times must start at one sample spacing");

    const int substeps = std::max(1, int(std::ceil(dt_sample / (cfg.cfl * g.h))));
    const double k = dt_sample / double(substeps);
    const double lam2 = (k * k) / (g.h * g.h);
    const int m = g.m;

    std::vector<double> prev = std::move(initial);
    std::vector<double> cur(prev.size(), 0.0), next(prev.size(), 0.0);

    // first step from zero initial velocity: p^1 = p^0 + (k^2/2) Lap p^0
#pragma omp parallel for schedule(static)
    for (int iy = 1; iy < m - 1; ++iy) {
        const size_t row = size_t(iy) * m;
        for (int ix = 1; ix + 1 < m; ++ix) {
            const size_t c = row + ix;
            const double lap = prev[c - 1] + prev[c + 1] + prev[c - m] + prev[c + m] - 4.0 * prev[c];
            cur[c] = prev[c] + 0.5 * lam2 * lap;
        }
    }

    auto sample_at = [&](const std::vector<double>& field, const Point2& s) {
        const double gx = (s.x + g.half_width) / g.h;
        const double gy = (s.y + g.half_width) / g.h;
        const int ix = int(gx), iy = int(gy);
        const double fx = gx - ix, fy = gy - iy;
        const size_t c = size_t(iy) * m + ix;
        return (1 - fx) * (1 - fy) * field[c] + fx * (1 - fy) * field[c + 1] +
               (1 - fx) * fy * field[c + m] + fx * fy * field[c + m + 1];
    };

    auto energy = [&](const std::vector<double>& a, const std::vector<double>& b) {
        // discrete energy sum (p_t^2 + |grad p|^2) h^2 at the half step
        double e = 0.0;
        for (int iy = 0; iy + 1 < m; ++iy) {
            const size_t row = size_t(iy) * m;
            for (int ix = 0; ix + 1 < m; ++ix) {
                const size_t c = row + ix;
                const double pt = (b[c] - a[c]) / k;
                const double px = 0.5 * ((b[c + 1] - b[c]) + (a[c + 1] - a[c])) / g.h;
                const double py = 0.5 * ((b[c + m] - b[c]) + (a[c + m] - a[c])) / g.h;
                e += pt * pt + px * px + py * py;
            }
        }
        return e * g.h * g.h;
    };

    FdTraces out;
    out.traces.assign(detectors.size(), std::vector<double>(times.size(), 0.0));
    if (track_energy) out.energy_initial = energy(prev, cur);

    auto record = [&](long step_count, const std::vector<double>& field) {
        if (step_count % substeps != 0) return;
        const size_t j = size_t(step_count / substeps) - 1;
        if (j < times.size())
            for (size_t di = 0; di < detectors.size(); ++di)
                out.traces[di][j] = sample_at(field, detectors[di]);
    };

    record(1, cur); // covers substeps == 1
    const long total_steps = long(times.size()) * substeps;
    for (long s = 2; s <= total_steps; ++s) {
#pragma omp parallel for schedule(static)
        for (int iy = 1; iy < m - 1; ++iy) {
            const size_t row = size_t(iy) * m;
            for (int ix = 1; ix + 1 < m; ++ix) {
                const size_t c = row + ix;
                const double lap = cur[c - 1] + cur[c + 1] + cur[c - m] + cur[c + m] - 4.0 * cur[c];
                next[c] = 2.0 * cur[c] - prev[c] + lam2 * lap;
            }
        }
        std::swap(prev, cur);
        std::swap(cur, next);
        record(s, cur);
    }
    if (track_energy) out.energy_final = energy(prev, cur);
    return out;
}

/// Convenience entry point sampling the initial value pointwise from `f`.
inline FdTraces fd_wave_solve(const std::function<double(double, double)>& f,
                              const std::vector<Point2>& detectors,
                              const std::vector<double>& times, const FdConfig& cfg,
                              bool track_energy = false) {
    const FdGrid g = FdGrid::from_config(cfg);
    std::vector<double> field(size_t(g.m) * g.m, 0.0);
    for (int iy = 0; iy < g.m; ++iy)
        for (int ix = 0; ix < g.m; ++ix)
            field[g.index(ix, iy)] = f(g.coord(ix), g.coord(iy));
    return fd_wave_solve_field(std::move(field), g, detectors, times, cfg, track_energy);
}

namespace detail {

/// Rasterizes a coefficient image onto the FD lattice blob by blob; only the
/// small support box of each basis function is touched.
inline std::vector<double> rasterize_basis_sum(const Vector& x, const BasisGrid& grid,
                                               const FdGrid& g) {
    std::vector<double> field(size_t(g.m) * g.m, 0.0);
    const KaiserBesselLut phi(grid.kb);
    const double a = grid.kb.a;
    for (int i = 0; i < grid.num_basis(); ++i) {
        if (x[i] == 0.0) continue;
        const Point2 r = grid.center(i);
        const int ix_lo = std::max(0, int(std::floor((r.x - a + g.half_width) / g.h)));
        const int ix_hi = std::min(g.m - 1, int(std::ceil((r.x + a + g.half_width) / g.h)));
        const int iy_lo = std::max(0, int(std::floor((r.y - a + g.half_width) / g.h)));
        const int iy_hi = std::min(g.m - 1, int(std::ceil((r.y + a + g.half_width) / g.h)));
        for (int iy = iy_lo; iy <= iy_hi; ++iy)
            for (int ix = ix_lo; ix <= ix_hi; ++ix)
                field[g.index(ix, iy)] += x[i] * phi(std::hypot(g.coord(ix) - r.x, g.coord(iy) - r.y));
    }
    return field;
}

inline std::vector<Point2> all_detectors(const MeasurementGeometry& geom) {
    std::vector<Point2> detectors(geom.num_detectors);
    for (int n = 0; n < geom.num_detectors; ++n) detectors[n] = geom.detector(n);
    return detectors;
}

inline std::vector<double> all_times(const MeasurementGeometry& geom) {
    std::vector<double> times(geom.num_times);
    for (int j = 0; j < geom.num_times; ++j) times[j] = geom.time_sample(j);
    return times;
}

inline Vector flatten_traces(const FdTraces& tr, const MeasurementGeometry& geom) {
    Vector y(geom.data_dim());
    for (int n = 0; n < geom.num_detectors; ++n)
        for (int j = 0; j < geom.num_times; ++j)
            y[geom.row_index(n, j)] = tr.traces[n][j];
    return y;
}

} // namespace detail

/// FD approximation of system-matrix column i, flattened per the row
/// convention row = N_t * n + j.
inline Vector oracle_column(int basis_index, const BasisGrid& grid, const MeasurementGeometry& geom,
                            const FdConfig& cfg) {
    Vector x = Vector::Zero(grid.num_basis());
    x[basis_index] = 1.0;
    const FdGrid g = FdGrid::from_config(cfg);
    FdTraces tr = fd_wave_solve_field(detail::rasterize_basis_sum(x, grid, g), g,
                                      detail::all_detectors(geom), detail::all_times(geom), cfg);
    return detail::flatten_traces(tr, geom);
}

/// FD approximation of A x for a whole coefficient image.
inline Vector oracle_forward(const Vector& x, const BasisGrid& grid, const MeasurementGeometry& geom,
                             const FdConfig& cfg) {
    if (x.size() != grid.num_basis())
        throw std::invalid_argument("oracle_forward: coefficient length mismatch");
    const FdGrid g = FdGrid::from_config(cfg);
    FdTraces tr = fd_wave_solve_field(detail::rasterize_basis_sum(x, grid, g), g,
                                      detail::all_detectors(geom), detail::all_times(geom), cfg);
    return detail::flatten_traces(tr, geom);
}

} // namespace patsvd
