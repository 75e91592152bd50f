#include "adnlab/smoothlim.hpp"

#include <algorithm>
#include <cmath>

#include "adnlab/errors.hpp"

namespace adnlab {

void SmoothLimiter::validate() const {
    if (!(limit > 0.0) || !std::isfinite(limit)) {
        throw ModelError("smooth limiter: limit must be positive, got " + std::to_string(limit));
    }
    if (!(k >= 1.0) || !std::isfinite(k)) {
        throw ModelError("smooth limiter: sharpness k must be >= 1, got " + std::to_string(k));
    }
}

double SmoothLimiter::knee_width() const {
    const double k2 = k * k;
    return 1.0 / (k2 * k2);
}

double hard_clip(double limit, double x) { return std::clamp(x, -limit, limit); }

double sat(const SmoothLimiter& lim, double x) {
    const double w = lim.knee_width();
    const double knee = (1.0 - w) * lim.limit;
    const double ax = std::abs(x);
    if (ax <= knee) {
        return x;
    }
    const double width = w * lim.limit;
    const double y = knee + width * std::tanh((ax - knee) / width);
    return std::copysign(y, x);
}

double sat_slope(const SmoothLimiter& lim, double x) {
    const double w = lim.knee_width();
    const double knee = (1.0 - w) * lim.limit;
    const double ax = std::abs(x);
    if (ax <= knee) {
        return 1.0;
    }
    const double t = std::tanh((ax - knee) / (w * lim.limit));
    return 1.0 - t * t;
}

Complex sat_vector(const SmoothLimiter& lim, Complex x) {
    const double m = std::abs(x);
    if (m == 0.0) {
        return {0.0, 0.0};
    }
    const double s = sat(lim, m);
    if (s == m) {
        return x;
    }
    return x * (s / m);
}

double logistic(double z) { return 0.5 * (1.0 + std::tanh(0.5 * z)); }

double softplus(double k, double z) {
    const double kz = k * z;
    if (kz > 0.0) {
        return z + std::log1p(std::exp(-kz)) / k;
    }
    return std::log1p(std::exp(kz)) / k;
}

double smooth_deadband(double d, double k, double e) {
    return softplus(k, e - d) - softplus(k, -e - d);
}

double smooth_deadband_slope(double d, double k, double e) {
    return logistic(k * (e - d)) + logistic(k * (-e - d));
}

double rate_window(double n, double n_min, double n_max, double k, double direction) {
    static const double offset = std::log((1.0 - kWindowAtLimit) / kWindowAtLimit);
    const double range = n_max - n_min;
    const double up = logistic(k * (n_max - n) / range - offset);
    const double down = logistic(k * (n - n_min) / range - offset);
    if (direction > 0.0) {
        return up;
    }
    if (direction < 0.0) {
        return down;
    }
    return up * down;
}

double antiwindup_residual(double /*xi*/, double e, double u, double u_sat, double k_aw) {
    return e + k_aw * (u_sat - u);
}

}  // namespace adnlab
