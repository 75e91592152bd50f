#pragma once

#include "adnlab/types.hpp"

namespace adnlab {

/// Smooth magnitude saturation with a hyperbolic-tangent knee.
///
/// The limiter is the identity up to (1 - w)·limit and then bends onto the
/// asymptote `limit` through a tanh segment of relative width w = k^-4.
/// k = 1 gives the plain limit·tanh(x/limit) curve; growing k pushes the
/// knee towards the hard clip while the function stays C² and odd.
struct SmoothLimiter {
    double limit = 1.0;
    double k = 10.0;

    /// Throws ModelError unless limit > 0 and k >= 1.
    void validate() const;

    /// Relative knee width w(k) = k^-4.
    double knee_width() const;
};

double hard_clip(double limit, double x);

double sat(const SmoothLimiter& lim, double x);

/// d sat / dx, analytic.
double sat_slope(const SmoothLimiter& lim, double x);

/// Magnitude limiting of a dq pair; the angle of the input is preserved.
Complex sat_vector(const SmoothLimiter& lim, Complex x);

/// Logistic function written with tanh, σ(z) = (1 + tanh(z/2)) / 2.
double logistic(double z);

/// Softplus ln(1 + e^{k z}) / k, evaluated without overflow.
double softplus(double k, double z);

/// Odd, monotone smooth deadband: ~0 for |e| <= d and ~e - d·sign(e) outside.
/// `k` is an absolute sharpness in 1/pu; the transition width is about 1/k.
double smooth_deadband(double d, double k, double e);
double smooth_deadband_slope(double d, double k, double e);

/// Window value reached exactly at the limit the rate pushes towards.
inline constexpr double kWindowAtLimit = 5e-4;

/// Multiplier in (0, 1) that suppresses motion of a bounded state towards
/// the limit selected by the sign of `direction`. The position is normalised
/// by the range, so `k` is dimensionless.
double rate_window(double n, double n_min, double n_max, double k, double direction);

/// Back-calculation anti-windup: dξ/dt = e + k_aw·(u_sat - u).
double antiwindup_residual(double xi, double e, double u, double u_sat, double k_aw);

}  // namespace adnlab
