#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace patsvd {

/// Generalized Kaiser-Bessel window parameters. The function is radially
/// symmetric with compact support of radius `a`.
struct KaiserBesselParams {
    double a = 0.055;   ///< support radius
    double gamma = 7.0; ///< window taper
    int m = 2;          ///< smoothness order

    void validate() const {
        if (!(a > 0.0)) throw std::invalid_argument("KaiserBesselParams: a must be > 0");
        if (!(gamma > 0.0)) throw std::invalid_argument("KaiserBesselParams: gamma must be > 0");
        if (m < 0) throw std::invalid_argument("KaiserBesselParams: m must be >= 0");
    }
};

/// Evaluates the Kaiser-Bessel profile at radial offset (dx, dy):
///   (sqrt(1 - |r|^2/a^2))^m * I_m(gamma * sqrt(1 - |r|^2/a^2)) / I_m(gamma)
/// inside the support, 0 outside. Total function, never throws for valid params.
inline double kaiser_bessel_eval(double dx, double dy, const KaiserBesselParams& kb) {
    const double r2 = dx * dx + dy * dy;
    const double a2 = kb.a * kb.a;
    if (r2 > a2) return 0.0;
    const double w = std::sqrt(1.0 - r2 / a2);
    return std::pow(w, kb.m) * std::cyl_bessel_i(double(kb.m), kb.gamma * w) /
           std::cyl_bessel_i(double(kb.m), kb.gamma);
}

inline double kaiser_bessel_eval(double radius, const KaiserBesselParams& kb) {
    return kaiser_bessel_eval(radius, 0.0, kb);
}

/// Dense radial lookup table for the Kaiser-Bessel profile. The quadrature in
/// the forward model evaluates the profile millions of times; a fine linear
/// interpolation table keeps that cheap while staying far below the
/// quadrature error (the profile is C^m smooth on [0, a]).
class KaiserBesselLut {
public:
    explicit KaiserBesselLut(const KaiserBesselParams& kb, int samples = 8192)
        : kb_(kb), inv_step_(double(samples - 1) / kb.a), values_(samples) {
        kb.validate();
        for (int i = 0; i < samples; ++i)
            values_[i] = kaiser_bessel_eval(kb.a * double(i) / double(samples - 1), kb);
    }

    double operator()(double radius) const {
        if (radius >= kb_.a || radius < 0.0) return 0.0;
        const double s = radius * inv_step_;
        const int i = int(s);
        const double f = s - double(i);
        return values_[i] + f * (values_[i + 1] - values_[i]);
    }

    const KaiserBesselParams& params() const { return kb_; }

private:
    KaiserBesselParams kb_;
    double inv_step_;
    std::vector<double> values_;
};

} // namespace patsvd
