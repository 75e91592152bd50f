#include "adnlab/cfreq.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "adnlab/errors.hpp"

namespace adnlab {

using Index = Eigen::Index;

namespace {

// Weights of the derivative at x0 of the parabola through (x0, x1, x2).
std::array<double, 3> lagrange_weights(double x0, double x1, double x2, double at) {
    return {((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2)),
            ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2)),
            ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1))};
}

}  // namespace

Vec sample_derivative(const Vec& t, const Vec& y) {
    const Index n = t.size();
    if (y.size() != n) throw ConfigError("derivative: sample count mismatch");
    Vec d = Vec::Zero(n);
    if (n < 2) return d;
    for (Index i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) throw ConfigError("derivative: time stamps must be increasing");
    }
    if (n == 2) {
        d.setConstant((y[1] - y[0]) / (t[1] - t[0]));
        return d;
    }
    for (Index i = 0; i < n; ++i) {
        const Index c = std::clamp<Index>(i, 1, n - 2);
        const auto w = lagrange_weights(t[c - 1], t[c], t[c + 1], t[i]);
        d[i] = w[0] * y[c - 1] + w[1] * y[c] + w[2] * y[c + 1];
    }
    return d;
}

Vec unwrap_angle(const Vec& angle) {
    Vec out = angle;
    double offset = 0.0;
    for (Index i = 1; i < angle.size(); ++i) {
        const double jump = angle[i] - angle[i - 1];
        offset -= 2.0 * std::numbers::pi * std::round(jump / (2.0 * std::numbers::pi));
        out[i] = angle[i] + offset;
    }
    return out;
}

Vec moving_average(const Vec& y, int window) {
    if (window < 1) throw ConfigError("moving average: window must be >= 1");
    if (window == 1) return y;
    const Index n = y.size();
    const Index lo_half = (window - 1) / 2;
    const Index hi_half = window - 1 - lo_half;
    Vec out(n);
    for (Index i = 0; i < n; ++i) {
        const Index a = std::max<Index>(0, i - lo_half);
        const Index b = std::min<Index>(n - 1, i + hi_half);
        out[i] = y.segment(a, b - a + 1).mean();
    }
    return out;
}

CfSeries cf_from_samples(const Vec& t, const CVec& v, double omega_frame, const std::string& source, int window) {
    const Index n = t.size();
    if (v.size() != n) throw ConfigError("complex frequency: sample count mismatch");
    Vec log_mag(n), ang(n);
    for (Index i = 0; i < n; ++i) {
        const double mag = std::abs(v[i]);
        if (!(mag > kVoltageFloor)) {
            throw DegenerateVoltageError((source.empty() ? std::string("signal") : source) + " at t = " +
                                             std::to_string(t[i]) + " s",
                                         mag);
        }
        log_mag[i] = std::log(mag);
        ang[i] = std::arg(v[i]);
    }
    CfSeries cf;
    cf.source = source;
    cf.t = t;
    cf.rho = moving_average(sample_derivative(t, log_mag), window);
    cf.omega = moving_average(sample_derivative(t, unwrap_angle(ang)), window).array() + omega_frame;
    return cf;
}

CfSeries cf_from_trajectory(const Trajectory& traj, const std::string& bus, double omega_frame, int window) {
    const Vec vd = traj.column(bus + ".vd");
    const Vec vq = traj.column(bus + ".vq");
    CVec v(vd.size());
    for (Index i = 0; i < vd.size(); ++i) v[i] = Complex(vd[i], vq[i]);
    return cf_from_samples(traj.times, v, omega_frame, bus, window);
}

namespace {

int find_gfl(const GridModel& m, const std::string& id) {
    for (std::size_t k = 0; k < m.gfl.size(); ++k) {
        if (m.gfl[k].params.id == id) return static_cast<int>(k);
    }
    return -1;
}

int find_gfm(const GridModel& m, const std::string& id) {
    for (std::size_t k = 0; k < m.gfm.size(); ++k) {
        if (m.gfm[k].id == id) return static_cast<int>(k);
    }
    return -1;
}

}  // namespace

CfSeries pll_internal_frequency(const Trajectory& traj, const GridSystem& grid, const Vec& p,
                                const std::string& converter) {
    const int k = find_gfl(grid.model(), converter);
    if (k < 0) throw ConfigError("no grid-following converter " + converter);
    const Index n = traj.samples();
    CfSeries cf;
    cf.source = converter + ".pll";
    cf.t = traj.times;
    cf.rho = Vec::Zero(n);
    cf.omega.resize(n);
    for (Index i = 0; i < n; ++i) {
        const GridDetail d = grid.detail(traj.at(i), p, traj.times[i]);
        cf.omega[i] = d.gfl[static_cast<std::size_t>(k)].pll.omega_pll;
    }
    return cf;
}

double CfDecomposition::additivity_residual() const {
    const double r = (synchronization.rho + regulation.rho - total.rho).lpNorm<Eigen::Infinity>();
    const double w = (synchronization.omega + regulation.omega - total.omega).lpNorm<Eigen::Infinity>();
    return std::max(r, w);
}

CfDecomposition decompose_samples(const Vec& t, const Vec& theta, const CVec& m, double omega_frame, int window) {
    const Index n = t.size();
    if (theta.size() != n || m.size() != n) throw ConfigError("decomposition: sample count mismatch");
    CfDecomposition out;
    out.synchronization.source = "synchronization";
    out.synchronization.t = t;
    out.synchronization.rho = Vec::Zero(n);
    out.synchronization.omega = moving_average(sample_derivative(t, theta), window).array() + omega_frame;
    out.regulation = cf_from_samples(t, m, 0.0, "regulation", window);
    CVec total(n);
    for (Index i = 0; i < n; ++i) total[i] = m[i] * std::polar(1.0, theta[i]);
    out.total = cf_from_samples(t, total, omega_frame, "total", window);
    return out;
}

CfDecomposition decompose_converter_cf(const Trajectory& traj, const GridSystem& grid, const Vec& p,
                                       const std::string& converter, int window) {
    const GridModel& model = grid.model();
    const double w0 = model.network.omega0;
    const Index n = traj.samples();
    Vec theta(n);
    CVec m(n);
    if (const int k = find_gfl(model, converter); k >= 0) {
        for (Index i = 0; i < n; ++i) {
            const GridDetail d = grid.detail(traj.at(i), p, traj.times[i]);
            theta[i] = d.gfl_state[static_cast<std::size_t>(k)].theta;
            m[i] = d.gfl[static_cast<std::size_t>(k)].v_mod;
        }
    } else if (const int g = find_gfm(model, converter); g >= 0) {
        for (Index i = 0; i < n; ++i) {
            const GridDetail d = grid.detail(traj.at(i), p, traj.times[i]);
            theta[i] = d.gfm_state[static_cast<std::size_t>(g)].theta;
            m[i] = d.gfm[static_cast<std::size_t>(g)].e_mag;
        }
    } else {
        throw ConfigError("no converter " + converter + " for complex-frequency decomposition");
    }
    CfDecomposition out = decompose_samples(traj.times, theta, m, w0, window);
    out.synchronization.source = converter + ".sync";
    out.regulation.source = converter + ".regulation";
    out.total.source = converter + ".total";
    return out;
}

}  // namespace adnlab
