#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adnlab/cfreq.hpp"
#include "adnlab/errors.hpp"
#include "adnlab/scenario.hpp"
#include "support.hpp"

using namespace adnlab;

namespace {

constexpr double kW0 = nominal_omega();

Vec uniform_times(double t_end, int n) { return Vec::LinSpaced(n + 1, 0.0, t_end); }

template <class F>
CVec sample(const Vec& t, F f) {
    CVec v(t.size());
    for (Eigen::Index k = 0; k < t.size(); ++k) v[k] = f(t[k]);
    return v;
}

double max_interior_error(const Vec& y, double (*exact)(double), const Vec& t) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < t.size(); ++k) worst = std::max(worst, std::abs(y[k] - exact(t[k])));
    return worst;
}

struct StepRun {
    Scenario sc;
    GridSystem grid;
    Vec p;
    Trajectory traj;
};

StepRun frequency_step(double dw, double t_end = 1.0) {
    Scenario sc = testing_support::scenario("gfl_feeder.json");
    GridSystem grid = build_grid(sc);
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    Vec p = eq.p;
    p[static_cast<Eigen::Index>(grid.dae().params.index("G1.dw"))] = dw;
    Trajectory traj = integrate(grid.dae(), eq.x, p, t_end, 1e-3);
    return {std::move(sc), std::move(grid), std::move(p), std::move(traj)};
}

}  // namespace

TEST(SampleDerivative, ExactForQuadraticsOnUnevenGrid) {
    Vec t(6);
    t << 0.0, 0.1, 0.15, 0.4, 0.45, 1.0;
    const Vec y = (3.0 * t.array().square() - 2.0 * t.array() + 1.0).matrix();
    const Vec d = sample_derivative(t, y);
    for (Eigen::Index k = 0; k < t.size(); ++k) EXPECT_NEAR(d[k], 6.0 * t[k] - 2.0, 1e-11);
}

TEST(SampleDerivative, RejectsTooFewSamples) {
    EXPECT_THROW(sample_derivative(Vec::Zero(2), Vec::Zero(2)), ConfigError);
}

TEST(UnwrapAngle, RemovesJumps) {
    const Vec t = uniform_times(1.0, 200);
    Vec wrapped(t.size());
    for (Eigen::Index k = 0; k < t.size(); ++k) wrapped[k] = std::remainder(20.0 * t[k], 2.0 * std::numbers::pi);
    const Vec u = unwrap_angle(wrapped);
    for (Eigen::Index k = 0; k < t.size(); ++k) EXPECT_NEAR(u[k], 20.0 * t[k], 1e-12);
}

TEST(MovingAverage, WindowOneIsIdentityAndLinesArePreserved) {
    const Vec t = uniform_times(1.0, 50);
    EXPECT_EQ(moving_average(t, 1), t);
    const Vec m = moving_average(t, 5);
    for (Eigen::Index k = 2; k < t.size() - 2; ++k) EXPECT_NEAR(m[k], t[k], 1e-14);
}

TEST(ComplexFrequency, ConstantPhasor) {
    const Vec t = uniform_times(0.2, 200);
    const auto cf = cf_from_samples(t, sample(t, [](double) { return std::polar(0.97, 0.3); }), kW0);
    EXPECT_LT(testing_support::max_abs(cf.rho), 1e-12);
    EXPECT_LT(testing_support::max_abs((cf.omega.array() - kW0).matrix()), 1e-9);
}

TEST(ComplexFrequency, ExponentialRotatingPhasor) {
    const double sigma = -3.0, w = 7.0;
    const Vec t = uniform_times(0.5, 500);
    const auto cf = cf_from_samples(t, sample(t, [&](double s) { return std::exp(Complex(sigma, w) * s); }), kW0);
    for (Eigen::Index k = 0; k < t.size(); ++k) {
        EXPECT_NEAR(cf.rho[k], sigma, 1e-9);
        EXPECT_NEAR(cf.omega[k], kW0 + w, 1e-9);
    }
}

TEST(ComplexFrequency, ChirpErrorIsSecondOrder) {
    // phase t^3 gives omega = 3 t^2; the three-point formulas err by O(h^2)
    auto err = [](int n) {
        const Vec t = uniform_times(1.0, n);
        const auto cf = cf_from_samples(t, sample(t, [](double s) { return std::polar(1.0, s * s * s); }), 0.0);
        return max_interior_error(cf.omega, [](double s) { return 3.0 * s * s; }, t);
    };
    const double e1 = err(100), e2 = err(200);
    EXPECT_LT(e1, 1e-3);
    EXPECT_NEAR(e1 / e2, 4.0, 0.5);
}

TEST(ComplexFrequency, FrameCovariance) {
    const Vec t = uniform_times(0.3, 300);
    auto signal = [](double s) { return std::polar(1.0 + 0.1 * s, 2.0 * s + s * s); };
    const double shift = 5.0;
    const auto a = cf_from_samples(t, sample(t, signal), kW0);
    const auto b = cf_from_samples(t, sample(t, [&](double s) { return signal(s) * std::polar(1.0, -shift * s); }),
                                   kW0 + shift);
    EXPECT_LT(testing_support::max_abs(a.omega - b.omega), 1e-9);
    EXPECT_LT(testing_support::max_abs(a.rho - b.rho), 1e-12);
}

TEST(ComplexFrequency, ScalingInvariance) {
    const Vec t = uniform_times(0.3, 300);
    auto signal = [](double s) { return std::polar(1.0 + 0.1 * s, 2.0 * s); };
    const Complex c = std::polar(3.0, -1.2);
    const auto a = cf_from_samples(t, sample(t, signal), kW0);
    const auto b = cf_from_samples(t, sample(t, [&](double s) { return c * signal(s); }), kW0);
    EXPECT_LT(testing_support::max_abs(a.omega - b.omega), 1e-9);
    EXPECT_LT(testing_support::max_abs(a.rho - b.rho), 1e-12);
}

TEST(ComplexFrequency, CollapsedVoltageNamesTheTime) {
    const Vec t = uniform_times(0.1, 10);
    CVec v = sample(t, [](double) { return Complex(1.0, 0.0); });
    v[4] = 0.0;
    try {
        cf_from_samples(t, v, kW0, "B2");
        FAIL() << "expected a degenerate voltage error";
    } catch (const DegenerateVoltageError& e) {
        EXPECT_NE(std::string(e.what()).find("B2"), std::string::npos);
    }
}

TEST(Decomposition, SyntheticPartsAddUp) {
    const Vec t = uniform_times(0.4, 400);
    Vec theta(t.size());
    CVec m(t.size());
    for (Eigen::Index k = 0; k < t.size(); ++k) {
        theta[k] = 0.5 * t[k] + std::sin(9.0 * t[k]);
        m[k] = std::polar(1.0 + 0.2 * t[k] * t[k], 0.3 * t[k]);
    }
    const auto d = decompose_samples(t, theta, m, kW0);
    EXPECT_LT(d.additivity_residual(), 1e-9);
    for (Eigen::Index k = 0; k < t.size(); ++k) EXPECT_EQ(d.synchronization.rho[k], 0.0);
}

TEST(GridCf, SteadyStateHasNominalFrequency) {
    const auto run = frequency_step(0.0, 0.2);
    const auto cf = cf_from_trajectory(run.traj, "B2", kW0);
    EXPECT_LT(testing_support::max_abs(cf.rho), 1e-6);
    EXPECT_LT(testing_support::max_abs((cf.omega.array() - kW0).matrix()), 1e-6);
    const auto pll = pll_internal_frequency(run.traj, run.grid, run.p, "C2");
    EXPECT_LT(testing_support::max_abs((pll.omega.array() - kW0).matrix()), 1e-6);
}

TEST(GridCf, PllFollowsBusAfterFrequencyStep) {
    const auto run = frequency_step(1.0);
    const auto bus = cf_from_trajectory(run.traj, "B2", kW0);
    const auto pll = pll_internal_frequency(run.traj, run.grid, run.p, "C2");
    const Eigen::Index last = run.traj.samples() - 1;
    EXPECT_NEAR(bus.omega[last], kW0 + 1.0, 1e-4);
    EXPECT_NEAR(pll.omega[last], kW0 + 1.0, 1e-4);
    EXPECT_NEAR(bus.rho[last], 0.0, 1e-4);
}

TEST(GridCf, ConverterDecompositionAddsUp) {
    const auto run = frequency_step(1.0);
    const auto d = decompose_converter_cf(run.traj, run.grid, run.p, "C2");
    EXPECT_LT(d.additivity_residual(), 1e-9);
    const Eigen::Index last = run.traj.samples() - 1;
    // once resynchronised, the modulation voltage is constant in the PLL frame
    EXPECT_NEAR(d.regulation.rho[last], 0.0, 1e-4);
    EXPECT_NEAR(d.regulation.omega[last], 0.0, 1e-4);
    EXPECT_NEAR(d.synchronization.omega[last], kW0 + 1.0, 1e-4);
}

TEST(GridCf, UnknownConverterRejected) {
    const auto run = frequency_step(0.0, 0.01);
    EXPECT_THROW(decompose_converter_cf(run.traj, run.grid, run.p, "C9"), ConfigError);
}
