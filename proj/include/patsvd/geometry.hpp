#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "patsvd/kaiser_bessel.hpp"

namespace patsvd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Cartesian N x N layout of Kaiser-Bessel centers tiling [-1,1]^2.
/// Linear index i in [0, N^2) maps to (col, row) = (i % N, i / N), the column
/// index varying fastest, so a coefficient vector is viewable as an N x N
/// image row by row.
struct BasisGrid {
    int n = 32;
    KaiserBesselParams kb{};

    void validate() const {
        if (n < 2) throw std::invalid_argument("BasisGrid: n must be >= 2");
        kb.validate();
    }

    int num_basis() const { return n * n; }

    Point2 center(int linear_index) const {
        const int i1 = linear_index % n;
        const int i2 = linear_index / n;
        return {-1.0 + 2.0 * double(i1) / double(n - 1),
                -1.0 + 2.0 * double(i2) / double(n - 1)};
    }
};

/// Detectors on the upper unit semicircle plus equidistant time samples.
/// Detector n (0-based) sits at angle (n+1)*pi/N_s, time sample j (0-based)
/// at (j+1)*T/N_t.
struct MeasurementGeometry {
    int num_detectors = 64;
    int num_times = 96;
    double horizon = 3.75;

    void validate() const {
        if (num_detectors < 1) throw std::invalid_argument("MeasurementGeometry: num_detectors must be >= 1");
        if (num_times < 1) throw std::invalid_argument("MeasurementGeometry: num_times must be >= 1");
        if (!(horizon > 0.0)) throw std::invalid_argument("MeasurementGeometry: horizon must be > 0");
    }

    int data_dim() const { return num_detectors * num_times; }

    Point2 detector(int n_index) const {
        const double phi = double(n_index + 1) * M_PI / double(num_detectors);
        return {std::cos(phi), std::sin(phi)};
    }

    double time_sample(int j_index) const {
        return double(j_index + 1) * horizon / double(num_times);
    }

    double time_step() const { return horizon / double(num_times); }

    /// Row index of (detector n, time sample j), both 0-based.
    int row_index(int n_index, int j_index) const {
        return num_times * n_index + j_index;
    }
};

/// Dense forward matrix mapping basis coefficients to sampled pressure data,
/// together with the discretization it was assembled for.
struct SystemMatrix {
    Matrix entries; // (N_t * N_s) x N^2, row-major convention via row_index()
    BasisGrid grid;
    MeasurementGeometry geometry;
    int table_resolution = 0; // distance samples per time step used in assembly

    int rows() const { return int(entries.rows()); }
    int cols() const { return int(entries.cols()); }
};

/// Applies the forward model to a coefficient image: y = A x, noise-free.
inline Vector forward_apply(const SystemMatrix& a, const Vector& x) {
    if (x.size() != a.entries.cols())
        throw std::invalid_argument("forward_apply: coefficient length " + std::to_string(x.size()) +
                                    " does not match matrix columns " + std::to_string(a.entries.cols()));
    return a.entries * x;
}

} // namespace patsvd
