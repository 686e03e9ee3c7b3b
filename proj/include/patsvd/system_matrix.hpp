#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "patsvd/geometry.hpp"
#include "patsvd/wave_profile.hpp"

namespace patsvd {

/// Precomputed pressure traces p(d_k, t_j) on a regular distance grid,
/// shared read-only by all columns during assembly.
struct ProfileTable {
    double d_step = 0.0;
    std::vector<std::vector<double>> traces; // [distance][time]

    double lerp(double dist, int j) const {
        const double s = dist / d_step;
        const size_t k = size_t(s);
        if (k + 1 >= traces.size())
            throw std::out_of_range("ProfileTable: distance beyond table span");
        const double f = s - double(k);
        return traces[k][j] + f * (traces[k + 1][j] - traces[k][j]);
    }
};

/// Builds the profile table for a grid/geometry pair. `resolution` is the
/// number of distance samples per time step (>= 4 keeps the linear
/// interpolation error below the quadrature error).
inline ProfileTable build_profile_table(const BasisGrid& grid, const MeasurementGeometry& geom,
                                        int resolution, const ProfileOptions& opts = {}) {
    if (resolution < 2)
        throw std::invalid_argument("build_profile_table: resolution must be >= 2 samples per time step");
    double max_dist = 0.0;
    for (int n = 0; n < geom.num_detectors; ++n) {
        const Point2 s = geom.detector(n);
        for (int corner = 0; corner < 4; ++corner) {
            const double cx = (corner & 1) ? 1.0 : -1.0;
            const double cy = (corner & 2) ? 1.0 : -1.0;
            max_dist = std::max(max_dist, std::hypot(s.x - cx, s.y - cy));
        }
    }
    const double span = max_dist + grid.kb.a;
    const double d_step = geom.time_step() / double(resolution);
    const int num_d = int(std::ceil(span / d_step)) + 2;

    std::vector<double> times(geom.num_times);
    for (int j = 0; j < geom.num_times; ++j) times[j] = geom.time_sample(j);

    const KaiserBesselLut phi(grid.kb);
    ProfileTable table;
    table.d_step = d_step;
    table.traces.resize(num_d);
    for (int k = 0; k < num_d; ++k)
        table.traces[k] = radial_pressure_profile(double(k) * d_step, phi, times, opts);
    return table;
}

/// Estimated worst-case linear interpolation error of the table: the midpoint
/// error of a lerp over step h is f'' h^2 / 8, i.e. one eighth of the largest
/// second difference.
inline double table_interpolation_residual(const ProfileTable& table) {
    double worst = 0.0;
    const size_t nd = table.traces.size();
    if (nd < 3) return 0.0;
    const size_t nt = table.traces[0].size();
    for (size_t k = 1; k + 1 < nd; ++k)
        for (size_t j = 0; j < nt; ++j)
            worst = std::max(worst, std::abs(table.traces[k + 1][j] - 2.0 * table.traces[k][j] +
                                             table.traces[k - 1][j]));
    return worst / 8.0;
}

/// Assembles the dense forward matrix. Entry (N_t*n + j, i) is the pressure
/// at detector s_n, time t_j for a unit coefficient on basis function i,
/// obtained by linear interpolation of the profile table over the
/// detector-center distance. Entries with t_j < dist - a are exactly zero.
inline SystemMatrix assemble_system_matrix(const BasisGrid& grid, const MeasurementGeometry& geom,
                                           int resolution = 4, const ProfileOptions& opts = {},
                                           double interp_tolerance = 0.02) {
    grid.validate();
    geom.validate();
    ProfileTable table = build_profile_table(grid, geom, resolution, opts);

    double peak = 0.0;
    for (const auto& tr : table.traces)
        for (double v : tr) peak = std::max(peak, std::abs(v));
    const double residual = table_interpolation_residual(table);
    if (peak > 0.0 && residual > interp_tolerance * peak)
        throw std::runtime_error("assemble_system_matrix: interpolation residual " +
                                 std::to_string(residual) + " exceeds tolerance " +
                                 std::to_string(interp_tolerance * peak) +
                                 "; increase the table resolution");

    SystemMatrix a;
    a.grid = grid;
    a.geometry = geom;
    a.table_resolution = resolution;
    a.entries.resize(geom.data_dim(), grid.num_basis());

    const double support = grid.kb.a;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < grid.num_basis(); ++i) {
        const Point2 r = grid.center(i);
        for (int n = 0; n < geom.num_detectors; ++n) {
            const Point2 s = geom.detector(n);
            const double dist = std::hypot(s.x - r.x, s.y - r.y);
            const int base = geom.row_index(n, 0);
            for (int j = 0; j < geom.num_times; ++j) {
                const double t = geom.time_sample(j);
                a.entries(base + j, i) = (t < dist - support) ? 0.0 : table.lerp(dist, j);
            }
        }
    }
    return a;
}

} // namespace patsvd
