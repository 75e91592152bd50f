#include <gtest/gtest.h>

#include <cmath>

#include "adnlab/errors.hpp"
#include "adnlab/scenario.hpp"
#include "adnlab/secondary.hpp"
#include "support.hpp"

using namespace adnlab;

namespace {

SecondarySettings settings_for(const Scenario& sc, const GridSystem& grid) {
    SecondarySettings s;
    const auto& buses = grid.model().network.buses;
    s.weights = WeightVector::uniform(buses.size(), sc.secondary.rho);
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto it = sc.secondary.weights.find(buses[i].id);
        if (it != sc.secondary.weights.end()) s.weights.w[static_cast<Eigen::Index>(i)] = it->second;
    }
    s.alpha = sc.secondary.alpha;
    s.max_iter = sc.secondary.max_iter;
    s.tol_v = sc.secondary.tol_v;
    s.v_nom = sc.secondary.v_nom;
    return s;
}

struct Loaded {
    Scenario sc;
    GridSystem grid;
    EquilibriumSolution eq;
};

Loaded load(const std::string& name) {
    Scenario sc = testing_support::scenario(name);
    GridSystem grid = build_grid(sc);
    auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    return {std::move(sc), std::move(grid), std::move(eq)};
}

UpdateProblem scalar_problem(const Vec& v, const Vec& s, double rho) {
    UpdateProblem pr;
    pr.v = v;
    pr.s = s;
    pr.weights = WeightVector::uniform(static_cast<std::size_t>(v.size()), rho);
    pr.gains = Vec::Zero(1);
    pr.lower = Vec::Constant(1, -100.0);
    pr.upper = Vec::Constant(1, 100.0);
    pr.alpha = 1.0;
    return pr;
}

}  // namespace

TEST(Measurements, TwoBusSnapshot) {
    GridSystem grid(testing_support::two_bus_model(0.8, 0.5));
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    const auto snap = collect_measurements(grid, eq.x, eq.p, 3);
    EXPECT_EQ(snap.iteration, 3);
    ASSERT_EQ(snap.bus_ids.size(), 2u);
    EXPECT_EQ(snap.bus_ids[1], "B2");
    EXPECT_NEAR(snap.v[0], 1.0, 1e-12);
    const double v2 = testing_support::two_bus_voltage(0.8, 0.5);
    EXPECT_NEAR(snap.v[1], v2, 1e-8);
    ASSERT_EQ(snap.load_ids.size(), 1u);
    EXPECT_NEAR(snap.load_i[0], 0.8 / v2, 1e-7);
    EXPECT_TRUE(snap.converter_ids.empty());
}

TEST(Measurements, ConverterQuantities) {
    const auto l = load("secondary_4bus.json");
    const auto snap = collect_measurements(l.grid, l.eq.x, l.eq.p);
    ASSERT_EQ(snap.converter_ids.size(), 2u);
    EXPECT_NEAR(snap.p_ref[0], 0.05, 1e-15);
    EXPECT_GT(snap.converter_i[0], 0.0);
    EXPECT_LT(snap.converter_i[0], 1.0);
}

TEST(Weights, Validation) {
    WeightVector w = WeightVector::uniform(3);
    EXPECT_NO_THROW(w.validate(3));
    EXPECT_THROW(w.validate(4), ConfigError);
    w.w[1] = -1.0;
    EXPECT_THROW(w.validate(3), ConfigError);
    w.w.setZero();
    EXPECT_THROW(w.validate(3), ConfigError);
}

TEST(Sensitivity, ConductanceRaisesLowVoltages) {
    const auto l = load("secondary_4bus.json");
    const auto layout = GainLayout::from(l.grid, l.eq.p);
    ASSERT_EQ(layout.size(), 4);
    const auto sens = gain_sensitivity(l.grid, l.eq.x, l.eq.p, layout);
    const auto k3 = static_cast<Eigen::Index>(std::find(layout.names.begin(), layout.names.end(), "C3.g_v") -
                                              layout.names.begin());
    EXPECT_GT(sens.voltage(2, k3), 0.0);
    EXPECT_GT(sens.voltage(3, k3), 0.0);
    // the ideal source pins the substation bus
    EXPECT_LT(sens.voltage.row(0).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Sensitivity, MatchesCentralDifferenceOracle) {
    const auto l = load("secondary_4bus.json");
    const auto layout = GainLayout::from(l.grid, l.eq.p);
    const auto sens = gain_sensitivity(l.grid, l.eq.x, l.eq.p, layout);
    const double h = 1e-3;
    for (Eigen::Index j = 0; j < layout.size(); ++j) {
        Vec up = l.eq.p, dn = l.eq.p;
        up[static_cast<Eigen::Index>(layout.params[static_cast<std::size_t>(j)])] += h;
        dn[static_cast<Eigen::Index>(layout.params[static_cast<std::size_t>(j)])] -= h;
        const auto eu = newton_equilibrium(l.grid.dae(), l.eq.x, up);
        const auto ed = newton_equilibrium(l.grid.dae(), l.eq.x, dn);
        const auto vu = collect_measurements(l.grid, eu.x, up).v;
        const auto vd = collect_measurements(l.grid, ed.x, dn).v;
        const Vec oracle = (vu - vd) / (2.0 * h);
        for (Eigen::Index i = 1; i < oracle.size(); ++i) {
            EXPECT_NEAR(sens.voltage(i, j), oracle[i], 0.02 * std::abs(oracle[i]) + 1e-9)
                << layout.names[static_cast<std::size_t>(j)] << " bus " << i;
        }
    }
}

TEST(Update, UnconstrainedClosedForm) {
    Vec v(3), s(3);
    v << 0.95, 0.97, 1.01;
    s << 0.02, 0.01, 0.005;
    const double rho = 1e-4;
    const auto up = solve_update(scalar_problem(v, s, rho));
    const double expect = -(s.array() * (v.array() - 1.0)).sum() / (s.squaredNorm() + rho);
    EXPECT_NEAR(up.delta[0], expect, 1e-10 * std::abs(expect));
    EXPECT_LT(up.objective_predicted, up.objective_before);
    EXPECT_LT(up.kkt_residual, 1e-10);
    EXPECT_FALSE(up.lower_active[0] || up.upper_active[0]);
}

TEST(Update, BoxBoundIsKkt) {
    Vec v(2), s(2);
    v << 0.9, 0.92;
    s << 0.001, 0.001;
    UpdateProblem pr = scalar_problem(v, s, 0.0);
    pr.upper[0] = 2.0;
    const auto up = solve_update(pr);
    EXPECT_TRUE(up.upper_active[0]);
    EXPECT_DOUBLE_EQ(up.delta[0], 2.0);
    EXPECT_DOUBLE_EQ(up.gains_new[0], 2.0);
    for (Eigen::Index i = 0; i < up.multipliers.size(); ++i) EXPECT_GE(up.multipliers[i], 0.0);
    EXPECT_LT(up.kkt_residual, 1e-10);
}

TEST(Update, CurrentLimitRespected) {
    Vec v(2), s(2);
    v << 0.9, 0.92;
    s << 0.01, 0.01;
    UpdateProblem pr = scalar_problem(v, s, 0.0);
    pr.c = Mat::Constant(1, 1, 0.1);
    pr.margin = Vec::Constant(1, 0.05);
    const auto up = solve_update(pr);
    EXPECT_LE(0.1 * up.delta[0], 0.05 + 1e-12);
    EXPECT_TRUE(up.current_active[0]);
}

TEST(Update, NothingToCorrect) {
    const auto up = solve_update(scalar_problem(Vec::Ones(3), Vec::Constant(3, 0.01), 1e-6));
    EXPECT_NEAR(up.delta[0], 0.0, 1e-15);
    EXPECT_EQ(up.objective_before, 0.0);
}

TEST(Update, WeightScalingLeavesStepUnchanged) {
    Vec v(3), s(3);
    v << 0.95, 0.97, 1.01;
    s << 0.02, 0.01, 0.005;
    UpdateProblem a = scalar_problem(v, s, 1e-4);
    UpdateProblem b = a;
    b.weights.w *= 7.0;
    b.weights.rho *= 7.0;
    EXPECT_NEAR(solve_update(a).delta[0], solve_update(b).delta[0], 1e-12);
}

TEST(Update, RejectsEmptyBox) {
    UpdateProblem pr = scalar_problem(Vec::Ones(2), Vec::Ones(2), 0.0);
    pr.lower[0] = 1.0;
    pr.upper[0] = 0.0;
    EXPECT_THROW(solve_update(pr), ConfigError);
}

TEST(Update, UnusableColumnsAreLeftAlone) {
    UpdateProblem pr = scalar_problem(Vec::Constant(2, 0.9), Vec::Ones(2), 0.0);
    pr.usable = {false};
    const auto up = solve_update(pr);
    EXPECT_TRUE(up.no_op);
    EXPECT_EQ(up.delta[0], 0.0);
}

TEST(Recursive, FourBusConverges) {
    const auto l = load("secondary_4bus.json");
    const auto hist = run_recursive(l.grid, l.eq.p, l.eq.x, settings_for(l.sc, l.grid));
    ASSERT_FALSE(hist.iterations.empty());
    EXPECT_TRUE(hist.converged) << hist.stop_reason;
    EXPECT_LE(hist.iterations.back().max_deviation, 0.01);
    EXPECT_GT(hist.iterations.front().max_deviation, 0.01);
    for (std::size_t k = 1; k < hist.iterations.size(); ++k) {
        EXPECT_LE(hist.iterations[k].objective, hist.iterations[k - 1].objective * (1.0 + 1e-9));
    }
}

TEST(Recursive, IteratesStayFeasible) {
    const auto l = load("secondary_4bus.json");
    const auto hist = run_recursive(l.grid, l.eq.p, l.eq.x, settings_for(l.sc, l.grid));
    for (const auto& it : hist.iterations) {
        for (Eigen::Index j = 0; j < it.gains.size(); ++j) {
            EXPECT_GE(it.gains[j], hist.layout.lower[j]);
            EXPECT_LE(it.gains[j], hist.layout.upper[j]);
        }
        for (std::size_t c = 0; c < l.grid.model().gfl.size(); ++c) {
            EXPECT_LE(it.snapshot.converter_i[static_cast<Eigen::Index>(c)],
                      l.grid.model().gfl[c].params.i_max * (1.0 + 1e-6));
        }
    }
}

TEST(Recursive, MixedViolationsBothCorrected) {
    const auto l = load("secondary_mixed.json");
    const auto before = collect_measurements(l.grid, l.eq.x, l.eq.p);
    ASSERT_LT(before.v[2], 0.99);
    ASSERT_GT(before.v[3], 1.01);
    const auto hist = run_recursive(l.grid, l.eq.p, l.eq.x, settings_for(l.sc, l.grid));
    EXPECT_TRUE(hist.converged) << hist.stop_reason;
    const auto after = collect_measurements(l.grid, hist.final_x, hist.final_p);
    EXPECT_LE(std::abs(after.v[2] - 1.0), 0.01);
    EXPECT_LE(std::abs(after.v[3] - 1.0), 0.01);
}

TEST(Recursive, Deterministic) {
    const auto l = load("secondary_4bus.json");
    const auto s = settings_for(l.sc, l.grid);
    const auto a = run_recursive(l.grid, l.eq.p, l.eq.x, s);
    const auto b = run_recursive(l.grid, l.eq.p, l.eq.x, s);
    ASSERT_EQ(a.iterations.size(), b.iterations.size());
    for (std::size_t k = 0; k < a.iterations.size(); ++k) {
        EXPECT_EQ(a.iterations[k].gains, b.iterations[k].gains);
        EXPECT_EQ(a.iterations[k].objective, b.iterations[k].objective);
    }
}
