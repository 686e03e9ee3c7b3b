#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "patsvd/geometry.hpp"
#include "patsvd/util.hpp"

namespace patsvd {

struct Ellipse {
    double cx = 0.0, cy = 0.0; ///< center
    double sa = 0.0, sb = 0.0; ///< semi-axes
    double rot = 0.0;          ///< rotation angle
    double intensity = 0.0;    ///< additive contribution inside

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(rot), s = std::sin(rot);
        const double ex = (c * dx + s * dy) / sa;
        const double ey = (-s * dx + c * dy) / sb;
        return ex * ex + ey * ey <= 1.0;
    }
};

/// Smooth random displacement field: bicubic (Catmull-Rom) interpolation of
/// i.i.d. uniform control values on a grid with spacing = correlation length.
struct DeformationField {
    double amplitude = 0.0;
    double corr_length = 0.3;
    double origin = -1.8; ///< control grid covers [origin, -origin]
    int control_n = 13;
    std::vector<double> dx, dy; // control_n x control_n each

    static double catmull_rom(double pm1, double p0, double p1, double p2, double t) {
        return 0.5 * ((2.0 * p0) + (-pm1 + p1) * t + (2.0 * pm1 - 5.0 * p0 + 4.0 * p1 - p2) * t * t +
                      (-pm1 + 3.0 * p0 - 3.0 * p1 + p2) * t * t * t);
    }

    double interp(const std::vector<double>& g, double x, double y) const {
        const double gx = (x - origin) / corr_length;
        const double gy = (y - origin) / corr_length;
        const int ix = std::clamp(int(std::floor(gx)), 1, control_n - 3);
        const int iy = std::clamp(int(std::floor(gy)), 1, control_n - 3);
        const double tx = gx - ix, ty = gy - iy;
        double col[4];
        for (int r = 0; r < 4; ++r) {
            const int row = iy - 1 + r;
            const double* p = &g[size_t(row) * control_n + (ix - 1)];
            col[r] = catmull_rom(p[0], p[1], p[2], p[3], tx);
        }
        return catmull_rom(col[0], col[1], col[2], col[3], ty);
    }

    Point2 displace(double x, double y) const {
        if (amplitude == 0.0 || dx.empty()) return {x, y};
        return {x + interp(dx, x, y), y + interp(dy, x, y)};
    }
};

/// Full description of one randomized modified Shepp-Logan phantom; rendering
/// is a deterministic function of the spec.
struct PhantomSpec {
    std::vector<Ellipse> ellipses;
    DeformationField deform;
    uint64_t seed = 0;
};

/// Draws a random phantom spec: skull rim, 6-12 interior ellipses, 3-8 fine
/// structures, plus a smooth random deformation. All ellipses are contained
/// in the unit disk before deformation.
inline PhantomSpec make_random_phantom_spec(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    auto uniform_int = [&](int lo, int hi) { return lo + int(unit(rng) * double(hi - lo + 1)) % (hi - lo + 1); };

    PhantomSpec spec;
    spec.seed = seed;
    // skull: bright rim with a dimmer interior, the classic modified layout
    spec.ellipses.push_back({0.0, 0.0, 0.72, 0.95, 0.0, 1.0});
    spec.ellipses.push_back({0.0, 0.0, 0.6624, 0.874, 0.0, -0.8});

    auto add_random_ellipses = [&](int count, double ax_lo, double ax_hi) {
        for (int e = 0; e < count; ++e) {
            const double ang = uniform(0.0, 2.0 * M_PI);
            const double rad = 0.7 * std::sqrt(unit(rng));
            Ellipse el;
            el.cx = rad * std::cos(ang);
            el.cy = rad * std::sin(ang);
            el.sa = uniform(ax_lo, ax_hi);
            el.sb = uniform(ax_lo, ax_hi);
            el.rot = uniform(0.0, M_PI);
            el.intensity = uniform(-0.4, 0.8);
            // containment in the unit disk
            const double max_ax = 0.98 - std::hypot(el.cx, el.cy);
            el.sa = std::min(el.sa, max_ax);
            el.sb = std::min(el.sb, max_ax);
            spec.ellipses.push_back(el);
        }
    };
    add_random_ellipses(uniform_int(6, 12), 0.05, 0.4);
    add_random_ellipses(uniform_int(3, 8), 0.01, 0.05);

    spec.deform.amplitude = uniform(0.0, 0.08);
    spec.deform.corr_length = 0.3;
    const int cn = spec.deform.control_n;
    spec.deform.dx.resize(size_t(cn) * cn);
    spec.deform.dy.resize(size_t(cn) * cn);
    for (auto& v : spec.deform.dx) v = uniform(-spec.deform.amplitude, spec.deform.amplitude);
    for (auto& v : spec.deform.dy) v = uniform(-spec.deform.amplitude, spec.deform.amplitude);
    return spec;
}

/// Point value of the (deformed) phantom at (x, y), clamped to [0, 1].
inline double phantom_value(const PhantomSpec& spec, double x, double y) {
    const Point2 p = spec.deform.displace(x, y);
    double v = 0.0;
    for (const Ellipse& el : spec.ellipses)
        if (el.contains(p.x, p.y)) v += el.intensity;
    return std::clamp(v, 0.0, 1.0);
}

/// Samples the phantom at the grid centers, yielding a coefficient image.
inline Vector render_phantom(const PhantomSpec& spec, const BasisGrid& grid) {
    Vector x(grid.num_basis());
    for (int i = 0; i < grid.num_basis(); ++i) {
        const Point2 r = grid.center(i);
        x[i] = phantom_value(spec, r.x, r.y);
    }
    return x;
}

inline Vector generate_phantom(uint64_t seed, const BasisGrid& grid) {
    return render_phantom(make_random_phantom_spec(seed), grid);
}

/// Adds i.i.d. Gaussian noise with standard deviation rho * max(y) of the
/// clean data vector.
inline Vector add_noise(const Vector& y, double rho, uint64_t seed) {
    if (rho < 0.0) throw std::invalid_argument("add_noise: rho must be >= 0");
    if (rho == 0.0) return y;
    const double sigma = rho * y.maxCoeff();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    Vector out = y;
    for (int i = 0; i < out.size(); ++i) out[i] += gauss(rng);
    return out;
}

enum class Role { train, validation, test };

inline const char* role_tag(Role role) {
    switch (role) {
        case Role::train: return "train";
        case Role::validation: return "validation";
        case Role::test: return "test";
    }
    throw std::logic_error("role_tag: bad role");
}

inline Role role_from_tag(const std::string& tag) {
    if (tag == "train") return Role::train;
    if (tag == "validation") return Role::validation;
    if (tag == "test") return Role::test;
    throw std::invalid_argument("role_from_tag: unknown role '" + tag + "'");
}

/// Paired coefficient images and measurements with their generation
/// provenance. Training datasets are always noise-free.
struct Dataset {
    Role role = Role::train;
    double rho = 0.0;
    uint64_t master_seed = 0;
    int grid_n = 0;
    std::vector<Vector> x;
    std::vector<Vector> y;

    size_t size() const { return x.size(); }
};

inline uint64_t phantom_seed(uint64_t master, Role role, uint64_t index) {
    return derive_seed(master, std::string("phantom/") + role_tag(role), index);
}

inline uint64_t noise_seed(uint64_t master, Role role, uint64_t index) {
    return derive_seed(master, std::string("noise/") + role_tag(role), index);
}

/// Generates `count` phantom/measurement pairs. The training role forces
/// rho = 0 (noise-free data); other roles add noise per sample.
inline Dataset build_dataset(int count, const BasisGrid& grid, const SystemMatrix& a, double rho,
                             Role role, uint64_t master_seed) {
    if (count < 0) throw std::invalid_argument("build_dataset: count must be >= 0");
    Dataset ds;
    ds.role = role;
    ds.rho = (role == Role::train) ? 0.0 : rho;
    ds.master_seed = master_seed;
    ds.grid_n = grid.n;
    ds.x.reserve(count);
    ds.y.reserve(count);
    for (int i = 0; i < count; ++i) {
        Vector xi = generate_phantom(phantom_seed(master_seed, role, i), grid);
        Vector yi = forward_apply(a, xi);
        if (ds.rho > 0.0) yi = add_noise(yi, ds.rho, noise_seed(master_seed, role, i));
        ds.x.push_back(std::move(xi));
        ds.y.push_back(std::move(yi));
    }
    return ds;
}

} // namespace patsvd
