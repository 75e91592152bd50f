#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "adnlab/errors.hpp"
#include "adnlab/grid_system.hpp"
#include "adnlab/netmodel.hpp"
#include "adnlab/smoothlim.hpp"
#include "support.hpp"

using namespace adnlab;
using testing_support::two_bus_model;
using testing_support::two_bus_voltage;

namespace {

ZipLoad zip(double az, double ai, double ap) {
    ZipLoad l;
    l.id = "D";
    l.bus = "B";
    l.p0 = 1.0;
    l.q0 = 0.4;
    l.a_z = az;
    l.a_i = ai;
    l.a_p = ap;
    l.b_z = az;
    l.b_i = ai;
    l.b_p = ap;
    return l;
}

/// Steady-state equivalent circuit: air-gap torque at slip s for |v| = 1.
double circuit_torque(const InductionMachine& m, double s) {
    const Complex j(0.0, 1.0);
    const Complex z_rotor = m.r_r / s + j * m.x_r;
    const Complex z_par = (j * m.x_m * z_rotor) / (j * m.x_m + z_rotor);
    const Complex i_s = 1.0 / (Complex(m.r_s, m.x_s) + z_par);
    const Complex i_r = i_s * (j * m.x_m) / (j * m.x_m + z_rotor);
    return std::norm(i_r) * m.r_r / s;
}

GridModel lossy_feeder() {
    GridModel m;
    m.network.mode = NetworkMode::algebraic;
    m.network.buses = {{"B1", 0.01}, {"B2", 0.02}, {"B3", 0.015}};
    m.network.branches = {{"L12", "B1", "B2", 0.05, 0.2}, {"L23", "B2", "B3", 0.08, 0.1}, {"L13", "B1", "B3", 0.1, 0.3}};
    GridSource g;
    g.id = "G1";
    g.bus = "B1";
    g.e_mag = 1.02;
    m.network.sources = {g};
    ZipLoad a = zip(0.2, 0.3, 0.5);
    a.id = "D2";
    a.bus = "B2";
    a.p0 = 0.6;
    a.q0 = 0.2;
    ZipLoad b = zip(0.5, 0.0, 0.5);
    b.id = "D3";
    b.bus = "B3";
    b.p0 = 0.4;
    b.q0 = -0.1;
    b.t_load = 0.05;
    m.network.zip_loads = {a, b};
    m.validate();
    return m;
}

}  // namespace

TEST(Zip, ImpedanceLoadAtReferenceVoltage) {
    const ZipLoad l = zip(1.0, 0.0, 0.0);
    EXPECT_DOUBLE_EQ(zip_power(l, l.v0, 1.0).real(), l.p0);
}

TEST(Zip, ConstantPowerIgnoresVoltage) {
    const ZipLoad l = zip(0.0, 0.0, 1.0);
    EXPECT_DOUBLE_EQ(zip_power(l, 0.8, 1.0).real(), l.p0);
}

TEST(Zip, MixedPolynomial) {
    const ZipLoad l = zip(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
    EXPECT_NEAR(zip_power(l, 0.9, 1.0).real(), (0.81 + 0.9 + 1.0) / 3.0, 1e-15);
}

TEST(Zip, InjectionCarriesTheComplexPower) {
    const ZipLoad l = zip(0.2, 0.3, 0.5);
    for (double mag : {0.5, 0.9, 1.1}) {
        for (double ang : {-1.0, 0.2, 2.5}) {
            const Complex v = std::polar(mag, ang);
            const Complex s = v * std::conj(zip_injection(l, v, 1.3));
            const Complex expect = zip_power(l, mag, 1.3);
            EXPECT_NEAR(s.real(), expect.real(), 1e-13);
            EXPECT_NEAR(s.imag(), expect.imag(), 1e-13);
        }
    }
}

TEST(Zip, InjectionIsContinuousAboveFloor) {
    const ZipLoad l = zip(0.2, 0.3, 0.5);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> mag(0.05, 1.5), ang(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Complex v = std::polar(mag(rng), ang(rng));
        const Complex i0 = zip_injection(l, v, 1.0);
        for (double h : {1e-4, 1e-6}) {
            const Complex dv(h, -h);
            const Complex i1 = zip_injection(l, v + dv, 1.0);
            // constant-power part has a local Lipschitz constant of order 1/|v|^2
            const double vmin = std::min(std::abs(v), std::abs(v + dv));
            EXPECT_LT(std::abs(i1 - i0), 10.0 * std::abs(dv) / (vmin * vmin));
        }
    }
}

TEST(Zip, DegenerateVoltageThrowsUnlessGuarded) {
    const ZipLoad l = zip(0.0, 0.0, 1.0);
    EXPECT_THROW(zip_injection(l, {0.005, 0.0}, 1.0), DegenerateVoltageError);
    const Complex g = zip_injection_guarded(l, {0.005, 0.0}, 1.0);
    EXPECT_NEAR(std::abs(g), std::abs(Complex(l.p0, -l.q0)) / kVoltageFloor, 1e-9);
}

TEST(InductionMachine, ZeroTorqueAtRestWithoutLoad) {
    InductionMachine m;
    m.t_mech = 0.0;
    const ImResidual r = im_residual(m, {0.0, {0.0, 0.0}}, {1.0, 0.0}, nominal_omega());
    EXPECT_EQ(r.t_e, 0.0);
    EXPECT_EQ(r.slip_rate, 0.0);
}

TEST(InductionMachine, ShortCircuitCurrent) {
    InductionMachine m;
    const Complex e(0.8, -0.2);
    const ImResidual r = im_residual(m, {0.02, e}, {0.0, 0.0}, nominal_omega());
    const Complex expect = -e / Complex(m.r_s, m.x_prime());
    EXPECT_NEAR(std::abs(r.i_stator - expect), 0.0, 1e-15);
}

TEST(InductionMachine, EquilibriumSlipMatchesTorqueCurve) {
    GridModel g;
    g.network.mode = NetworkMode::algebraic;
    g.network.buses = {{"B1", 0.01}};
    GridSource src;
    src.id = "G1";
    src.bus = "B1";
    g.network.sources = {src};
    InductionMachine im;
    im.id = "M1";
    im.bus = "B1";
    im.t_mech = 0.5;
    g.network.machines = {im};
    g.validate();
    GridSystem grid(g);
    Vec guess = grid.flat_start();
    guess[grid.dae().state_index("M1.s")] = 0.01;
    const auto sol = newton_equilibrium(grid.dae(), guess, grid.dae().params.values());
    const double slip = sol.x[grid.dae().state_index("M1.s")];

    // Bisection on the stable (small-slip) side of the torque curve.
    double lo = 1e-6, hi = 0.05;
    ASSERT_GT(circuit_torque(im, hi), im.t_mech);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (circuit_torque(im, mid) < im.t_mech ? lo : hi) = mid;
    }
    EXPECT_NEAR(slip, 0.5 * (lo + hi), 1e-8);
    EXPECT_LT(testing_support::max_abs(grid.dae().evaluate(sol.x)), 1e-9);
}

TEST(Ltc, CentredVoltageHoldsTap) {
    LtcTransformer t;
    EXPECT_NEAR(ltc_residual(t, 1.0, t.v_ref), 0.0, 1e-15);
}

TEST(Ltc, WindowStopsMotionAtLimit) {
    LtcTransformer t;
    t.k_s = 50.0;
    const double v = t.v_ref - 3.0 * t.d_band;
    const double interior = ltc_residual(t, 0.5 * (t.n_min + t.n_max), v);
    EXPECT_LT(std::abs(ltc_residual(t, t.n_max, v)), 1e-3 * std::abs(interior));
}

TEST(Ltc, LowVoltageRaisesTap) {
    LtcTransformer t;
    EXPECT_GT(ltc_residual(t, 1.0, t.v_ref - 2.0 * t.d_band), 0.0);
}

TEST(Ltc, EquilibriumWithinDeadband) {
    GridModel g;
    g.network.mode = NetworkMode::algebraic;
    g.network.buses = {{"B1", 0.01}, {"B2", 0.01}};
    GridSource src;
    src.id = "G1";
    src.bus = "B1";
    g.network.sources = {src};
    LtcTransformer t;
    t.id = "T12";
    t.from = "B1";
    t.to = "B2";
    t.x_t = 0.1;
    g.network.ltcs = {t};
    ZipLoad l = zip(0.5, 0.0, 0.5);
    l.id = "D2";
    l.bus = "B2";
    l.p0 = 0.8;
    l.q0 = 0.3;
    g.network.zip_loads = {l};
    g.validate();
    GridSystem grid(g);
    const auto sol = solve_grid_equilibrium(grid, grid.dae().params.values());
    const GridDetail d = grid.detail(sol.x, sol.p);
    ASSERT_GT(d.taps[0], t.n_min);
    ASSERT_LT(d.taps[0], t.n_max);
    EXPECT_LE(std::abs(t.v_ref - std::abs(d.bus_v[1])), t.d_band + 3.0 / t.k_s);
}

TEST(Network, UnforcedNetworkAtRest) {
    NetworkModel m = two_bus_model(0.5, 0.5).network;
    const std::vector<Complex> v(2), i(1), inj(2);
    const auto r = network_residual(m, v, i, inj);
    for (auto z : r.branch) EXPECT_EQ(z, Complex(0.0, 0.0));
    for (auto z : r.bus) EXPECT_EQ(z, Complex(0.0, 0.0));
}

TEST(Network, BranchResidualIsPhasorOhmsLaw) {
    NetworkModel m = two_bus_model(0.5, 0.5).network;
    m.branches[0].r = 0.1;
    const Complex i(0.3, -0.2);
    const Complex drop = Complex(0.1, 0.5) * i;
    const std::vector<Complex> v{{1.0, 0.1}, Complex(1.0, 0.1) - drop};
    const std::vector<Complex> cur{i}, inj(2);
    EXPECT_LT(std::abs(network_residual(m, v, cur, inj).branch[0]), 1e-15);
    const std::vector<Complex> off{{1.0, 0.1}, Complex(1.0, 0.1) - drop + 0.01};
    EXPECT_GT(std::abs(network_residual(m, off, cur, inj).branch[0]), 1e-3);
}

TEST(Network, CommonRotationPreservesResidualNorm) {
    const NetworkModel m = lossy_feeder().network;
    std::mt19937 rng(3);
    std::normal_distribution<double> n;
    auto c = [&] { return Complex(n(rng), n(rng)); };
    std::vector<Complex> v{c(), c(), c()}, i{c(), c(), c()}, inj{c(), c(), c()};
    auto norm = [&](const std::vector<Complex>& vv, const std::vector<Complex>& ii, const std::vector<Complex>& jj) {
        const auto r = network_residual(m, vv, ii, jj);
        double s = 0.0;
        for (auto z : r.branch) s += std::norm(z);
        for (auto z : r.bus) s += std::norm(z);
        return std::sqrt(s);
    };
    const double before = norm(v, i, inj);
    const Complex rot = std::polar(1.0, 0.73);
    for (auto* vec : {&v, &i, &inj}) {
        for (auto& z : *vec) z *= rot;
    }
    EXPECT_NEAR(norm(v, i, inj), before, 1e-12 * before);
}

TEST(Network, TwoBusUpperRoot) {
    GridSystem grid(two_bus_model(0.8, 0.5));
    const auto sol = solve_grid_equilibrium(grid, grid.dae().params.values());
    const double v2 = std::abs(grid.detail(sol.x, sol.p).bus_v[1]);
    EXPECT_NEAR(v2, two_bus_voltage(0.8, 0.5), 1e-8);
    EXPECT_NEAR(v2, 0.894427190999916, 1e-8);
}

TEST(Network, PowerBalanceAtEquilibrium) {
    GridSystem grid(lossy_feeder());
    const auto sol = solve_grid_equilibrium(grid, grid.dae().params.values());
    const GridDetail d = grid.detail(sol.x, sol.p);
    const auto& net = grid.model().network;
    double generated = 0.0, consumed = 0.0, losses = 0.0;
    for (std::size_t s = 0; s < net.sources.size(); ++s) {
        generated += (d.bus_v[net.bus_index(net.sources[s].bus)] * std::conj(d.source_i[s])).real();
    }
    for (std::size_t l = 0; l < net.zip_loads.size(); ++l) {
        consumed += (d.bus_v[net.bus_index(net.zip_loads[l].bus)] * std::conj(d.load_i[l])).real();
    }
    for (std::size_t k = 0; k < net.branches.size(); ++k) losses += net.branches[k].r * std::norm(d.branch_i[k]);
    EXPECT_NEAR(generated, consumed + losses, 1e-8);
}

TEST(Network, ValidationCatchesBrokenModels) {
    GridModel m = two_bus_model(0.5, 0.5);
    m.network.branches.clear();
    EXPECT_THROW(m.validate(), ModelError);

    m = two_bus_model(0.5, 0.5);
    m.network.zip_loads[0].bus = "B9";
    try {
        m.validate();
        FAIL() << "dangling bus accepted";
    } catch (const ModelError& e) {
        EXPECT_NE(std::string(e.what()).find("B9"), std::string::npos);
    }

    m = two_bus_model(0.5, 0.5);
    m.network.zip_loads[0].a_z = 0.5;
    EXPECT_THROW(m.validate(), ModelError);
}
