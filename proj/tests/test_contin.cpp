#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "adnlab/contin.hpp"
#include "adnlab/errors.hpp"
#include "adnlab/grid_system.hpp"
#include "adnlab/scenario.hpp"
#include "support.hpp"

using namespace adnlab;

namespace {

DaeSystem normal_form(int dims, DaeSystem::Residual f) {
    DaeSystem s;
    for (int i = 0; i < dims; ++i) s.state_names.push_back(i == 0 ? "x" : "y");
    s.mass = Vec::Ones(dims);
    s.params.add("lambda", 0.0);
    s.residual = std::move(f);
    return s;
}

/// x' = lambda - x^2, fold at lambda = 0.
DaeSystem fold_system() {
    return normal_form(1, [](double, const Vec& x, const Vec& p, Vec& f) {
        f.resize(1);
        f[0] = p[0] - x[0] * x[0];
    });
}

/// Supercritical Hopf normal form with unit frequency; cycle radius sqrt(lambda).
DaeSystem hopf_system() {
    return normal_form(2, [](double, const Vec& x, const Vec& p, Vec& f) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        f.resize(2);
        f[0] = p[0] * x[0] - x[1] - x[0] * r2;
        f[1] = x[0] + p[0] * x[1] - x[1] * r2;
    });
}

EquilibriumSolution start_at(const DaeSystem& sys, const Vec& x, double lambda) {
    Vec p = sys.params.values();
    p[0] = lambda;
    return newton_equilibrium(sys, x, p);
}

ContinuationSettings range(double lo, double hi, int direction = 1) {
    ContinuationSettings s;
    s.p_min = lo;
    s.p_max = hi;
    s.direction = direction;
    return s;
}

struct TwoBusBranch {
    GridSystem grid;
    EquilibriumSolution start;
    Branch branch;
};

TwoBusBranch two_bus_branch() {
    GridSystem grid(testing_support::two_bus_model(1.0, 0.5));
    Vec p = grid.dae().params.values();
    p[static_cast<Eigen::Index>(grid.dae().params.index("lambda"))] = 0.5;
    auto start = solve_grid_equilibrium(grid, p);
    ContinuationSettings s = range(0.05, 2.0);
    s.h_max = 0.05;
    auto branch = continue_branch(grid.dae(), start, "lambda", s);
    return {std::move(grid), std::move(start), std::move(branch)};
}

Scenario weak_grid_gfl() {
    Scenario sc = testing_support::scenario("gfl_feeder.json");
    sc.model.network.zip_loads[0].p0 = 0.3;
    sc.model.network.zip_loads[0].q0 = 0.1;
    sc.model.gfl[0].params.kp_pll = 200.0;
    sc.model.gfl[0].params.ki_pll = 4000.0;
    return sc;
}

}  // namespace

TEST(Continuation, LinearSystemHasNoBifurcations) {
    const DaeSystem s = normal_form(2, [](double, const Vec& x, const Vec& p, Vec& f) {
        f.resize(2);
        f[0] = -x[0] + p[0];
        f[1] = -2.0 * x[1] + 0.5 * x[0];
    });
    const auto start = start_at(s, Vec::Zero(2), 0.0);
    const Branch br = continue_branch(s, start, "lambda", range(-1.0, 2.0));
    EXPECT_GT(br.points.size(), 10u);
    // stops within one maximal step of the upper bound
    EXPECT_LE(br.points.back().lambda, 2.0);
    EXPECT_GT(br.points.back().lambda, 2.0 - ContinuationSettings{}.h_max);
    EXPECT_TRUE(find_bifurcations(s, start.p, br).empty());
}

TEST(Continuation, RejectsInconsistentSteps) {
    const DaeSystem s = fold_system();
    const auto start = start_at(s, Vec::Ones(1), 1.0);
    ContinuationSettings bad;
    bad.h_min = 0.1;
    bad.h_init = 0.01;
    EXPECT_THROW(continue_branch(s, start, "lambda", bad), ConfigError);
}

TEST(Continuation, FoldNormalForm) {
    const DaeSystem s = fold_system();
    const auto start = start_at(s, Vec::Ones(1), 1.0);
    const Branch br = continue_branch(s, start, "lambda", range(-1.0, 2.0, -1));
    const auto recs = find_bifurcations(s, start.p, br);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kind, BifurcationKind::snb);
    EXPECT_NEAR(recs[0].lambda, 0.0, 1e-8);
    EXPECT_NEAR(recs[0].x[0], 0.0, 1e-4);
}

TEST(Continuation, HopfNormalForm) {
    const DaeSystem s = hopf_system();
    const auto start = start_at(s, Vec::Zero(2), -0.5);
    const Branch br = continue_branch(s, start, "lambda", range(-0.5, 0.5));
    const auto recs = find_bifurcations(s, start.p, br);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kind, BifurcationKind::hb);
    EXPECT_NEAR(recs[0].lambda, 0.0, 1e-8);
    ASSERT_FALSE(recs[0].crossing.empty());
    EXPECT_NEAR(std::abs(recs[0].crossing[0].imag()), 1.0, 1e-6);

    const auto cycle = limit_cycle_amplitude(s, start.p, "lambda", recs[0], 0.04, "x");
    EXPECT_TRUE(cycle.converged);
    EXPECT_NEAR(cycle.amplitude, std::sqrt(0.04), 0.05 * std::sqrt(0.04));

    const auto quiet = limit_cycle_amplitude(s, start.p, "lambda", recs[0], -0.04, "x");
    EXPECT_TRUE(quiet.converged);
    EXPECT_LT(quiet.amplitude, 1e-6);
}

TEST(TwoBus, NoseOfThePvCurve) {
    const auto tb = two_bus_branch();
    const auto recs = find_bifurcations(tb.grid.dae(), tb.start.p, tb.branch);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kind, BifurcationKind::snb);
    EXPECT_NEAR(recs[0].lambda, 1.0, 1e-6);
    double top = 0.0;
    for (const auto& pt : tb.branch.points) top = std::max(top, pt.lambda);
    EXPECT_NEAR(top, 1.0, 0.005);
}

TEST(TwoBus, BranchMatchesAnalyticRoots) {
    const auto tb = two_bus_branch();
    const Eigen::Index vd = tb.grid.bus_state(1);
    bool upper = true;
    int lower_points = 0;
    for (const auto& pt : tb.branch.points) {
        if (pt.dlambda_ds < 0.0) upper = false;
        const double v = std::hypot(pt.x[vd], pt.x[vd + 1]);
        const double disc = 1.0 - pt.lambda * pt.lambda;
        ASSERT_GE(disc, -1e-9);
        const double root = std::sqrt(0.5 * (1.0 + (upper ? 1.0 : -1.0) * std::sqrt(std::max(disc, 0.0))));
        // the square root amplifies errors near the nose
        if (disc > 1e-4) {
            EXPECT_NEAR(v, root, 1e-8) << "lambda " << pt.lambda;
        }
        if (!upper) ++lower_points;
    }
    EXPECT_GT(lower_points, 3);
}

TEST(TwoBus, EveryPointIsAnEquilibrium) {
    const auto tb = two_bus_branch();
    const auto k = static_cast<Eigen::Index>(tb.grid.dae().params.index("lambda"));
    for (const auto& pt : tb.branch.points) {
        Vec p = tb.start.p;
        p[k] = pt.lambda;
        EXPECT_LT(tb.grid.dae().evaluate(pt.x, p).norm(), 1e-8);
    }
}

TEST(TwoBus, UnstableCountChangesOnlyAtTheFold) {
    const auto tb = two_bus_branch();
    const auto& pts = tb.branch.points;
    int changes = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        ASSERT_TRUE(pts[i].has_spectrum);
        const int d = pts[i + 1].spectrum.unstable() - pts[i].spectrum.unstable();
        EXPECT_LE(std::abs(d), 1);
        if (d != 0) ++changes;
    }
    EXPECT_EQ(changes, 1);
    EXPECT_EQ(pts.front().spectrum.unstable(), 0);
    EXPECT_EQ(pts.back().spectrum.unstable_real(), 1);
}

TEST(TwoBus, TangentTurnsAtTheNose) {
    const auto tb = two_bus_branch();
    double flattest = INFINITY;
    for (const auto& pt : tb.branch.points) {
        if (std::abs(pt.lambda - 1.0) < 0.01) flattest = std::min(flattest, std::abs(pt.dlambda_ds));
    }
    EXPECT_LE(flattest, 0.05);
}

TEST(GflFeeder, WeakGridHopf) {
    const Scenario sc = weak_grid_gfl();
    GridSystem grid = build_grid(sc);
    Vec p = grid.dae().params.values();
    p[static_cast<Eigen::Index>(grid.dae().params.index("X"))] = 0.3;
    const auto start = solve_grid_equilibrium(grid, p);
    ContinuationSettings s = range(0.05, 3.0);
    s.h_max = 0.05;
    s.stop_at_first = true;
    const Branch br = continue_branch(grid.dae(), start, "X", s);
    const auto recs = find_bifurcations(grid.dae(), start.p, br);
    ASSERT_FALSE(recs.empty());
    EXPECT_EQ(recs[0].kind, BifurcationKind::hb);
    ASSERT_FALSE(recs[0].crossing.empty());
    EXPECT_LT(std::abs(recs[0].crossing[0].real()), 1e-5);
    EXPECT_GT(std::abs(recs[0].crossing[0].imag()), 10.0);
    EXPECT_GT(recs[0].lambda, 0.3);
    EXPECT_EQ(br.points.front().spectrum.unstable(), 0);
}

TEST(Boundary, TwoBusReactanceFamily) {
    const Scenario sc = testing_support::scenario("two_bus.json");
    GridSystem grid = build_grid(sc);
    const auto base = solve_grid_equilibrium(grid, grid.dae().params.values());
    ContinuationSettings s = sc.continuation.settings;
    s.p_max = 3.0;
    const auto solver = [&](const Vec& p, const Vec& g) { return solve_grid_equilibrium(grid, p, g); };
    const auto b = trace_boundary_2d(grid.dae(), base.p, base.x, "lambda", "X", {0.25, 0.5, 1.0}, s, solver);
    ASSERT_EQ(b.rows.size(), 3u);
    for (const auto& row : b.rows) {
        ASSERT_TRUE(row.error.empty()) << row.error;
        ASSERT_TRUE(row.record.has_value());
        EXPECT_EQ(row.record->kind, BifurcationKind::snb);
        // P X = 1/2 at the nose
        EXPECT_NEAR(row.record->lambda, 0.5 / row.param2, 1e-5);
    }
}

TEST(Boundary, EmptyGridGivesEmptyResult) {
    const Scenario sc = testing_support::scenario("two_bus.json");
    GridSystem grid = build_grid(sc);
    const auto base = solve_grid_equilibrium(grid, grid.dae().params.values());
    const auto b = trace_boundary_2d(grid.dae(), base.p, base.x, "lambda", "X", {}, sc.continuation.settings);
    EXPECT_TRUE(b.rows.empty());
    EXPECT_EQ(b.param2, "X");
}

TEST(Boundary, UnsortedGridRejected) {
    const Scenario sc = testing_support::scenario("two_bus.json");
    GridSystem grid = build_grid(sc);
    const auto base = solve_grid_equilibrium(grid, grid.dae().params.values());
    EXPECT_THROW(trace_boundary_2d(grid.dae(), base.p, base.x, "lambda", "X", {1.0, 0.5}, sc.continuation.settings),
                 ConfigError);
}

TEST(Boundary, VoltVarDroopExtendsMargin) {
    const Scenario sc = testing_support::scenario("gfl_feeder.json");
    GridSystem grid = build_grid(sc);
    const auto base = solve_grid_equilibrium(grid, grid.dae().params.values());
    const auto solver = [&](const Vec& p, const Vec& g) { return solve_grid_equilibrium(grid, p, g); };
    const auto b = trace_boundary_2d(grid.dae(), base.p, base.x, "lambda", "kq", sc.boundary.grid,
                                     sc.continuation.settings, solver);
    double prev = 0.0;
    for (const auto& row : b.rows) {
        ASSERT_TRUE(row.record.has_value()) << "kq " << row.param2 << " " << row.error;
        EXPECT_GE(row.record->lambda, prev) << "kq " << row.param2;
        prev = row.record->lambda;
    }
    EXPECT_GT(b.rows.back().record->lambda, b.rows.front().record->lambda);
}
