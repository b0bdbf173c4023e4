#pragma once

#include <cmath>
#include <limits>

#include "effpipe/errors.hpp"

namespace effpipe {

namespace dist_detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
// Converges quickly for x < (a + 1) / (a + b + 2).
inline double beta_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    constexpr int max_terms = 10000;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_terms; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) return h;
    }
    throw SolverFailure("incomplete beta continued fraction did not converge");
}

// x^a (1-x)^b / (a B(a, b)) in log space.
inline double beta_prefactor(double a, double b, double x) {
    return std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
}

}  // namespace dist_detail

/// Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0))
        throw DomainError("incomplete_beta requires a, b > 0 and 0 <= x <= 1");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double front = dist_detail::beta_prefactor(a, b, x);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * dist_detail::beta_fraction(a, b, x) / a;
    return 1.0 - front * dist_detail::beta_fraction(b, a, 1.0 - x) / b;
}

/// P(F <= f) for the F distribution with (d1, d2) degrees of freedom.
inline double f_cdf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw DomainError("F distribution needs positive degrees of freedom");
    if (std::isnan(f)) throw DomainError("F statistic is NaN");
    if (f <= 0.0) return 0.0;
    if (std::isinf(f)) return 1.0;
    return incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

/// P(F > f), computed directly rather than as 1 - cdf to keep small tails.
inline double f_sf(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw DomainError("F distribution needs positive degrees of freedom");
    if (std::isnan(f)) throw DomainError("F statistic is NaN");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

/// Two-sided p-value P(|T| >= |t|) for Student's t with nu degrees of freedom.
inline double student_t_two_tailed(double t, double nu) {
    if (!(nu > 0.0)) throw DomainError("t distribution needs positive degrees of freedom");
    if (std::isnan(t)) throw DomainError("t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

}  // namespace effpipe
