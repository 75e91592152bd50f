#include <benchmark/benchmark.h>

#include <filesystem>

#include "adnlab/cfreq.hpp"
#include "adnlab/contin.hpp"
#include "adnlab/scenario.hpp"
#include "adnlab/secondary.hpp"
#include "adnlab/smoothlim.hpp"

using namespace adnlab;

namespace {

Scenario load(const char* name) { return load_scenario(std::filesystem::path(ADNLAB_SCENARIO_DIR) / name); }

void BM_Sat(benchmark::State& state) {
    const SmoothLimiter lim{1.2, 20.0};
    double x = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sat(lim, x));
        x += 1e-4;
        if (x > 3.0) x = -3.0;
    }
}
BENCHMARK(BM_Sat);

void BM_Equilibrium(benchmark::State& state) {
    const Scenario sc = load("gfl_feeder.json");
    GridSystem grid = build_grid(sc);
    const Vec p = grid.dae().params.values();
    for (auto _ : state) benchmark::DoNotOptimize(solve_grid_equilibrium(grid, p));
}
BENCHMARK(BM_Equilibrium)->Unit(benchmark::kMicrosecond);

void BM_Jacobian(benchmark::State& state) {
    const Scenario sc = load("secondary_4bus.json");
    GridSystem grid = build_grid(sc);
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    for (auto _ : state) benchmark::DoNotOptimize(jacobian_fd(grid.dae(), eq.x, eq.p));
}
BENCHMARK(BM_Jacobian)->Unit(benchmark::kMicrosecond);

void BM_Continuation(benchmark::State& state) {
    const Scenario sc = load("two_bus.json");
    GridSystem grid = build_grid(sc);
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    for (auto _ : state) {
        const Branch br = continue_branch(grid.dae(), eq, "lambda", sc.continuation.settings);
        benchmark::DoNotOptimize(find_bifurcations(grid.dae(), eq.p, br));
    }
}
BENCHMARK(BM_Continuation)->Unit(benchmark::kMillisecond);

void BM_Integrate(benchmark::State& state) {
    const Scenario sc = load("gfl_feeder.json");
    GridSystem grid = build_grid(sc);
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    Vec p = eq.p;
    p[static_cast<Eigen::Index>(grid.dae().params.index("G1.dw"))] = 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(integrate(grid.dae(), eq.x, p, 0.2, 1e-3));
}
BENCHMARK(BM_Integrate)->Unit(benchmark::kMillisecond);

void BM_Secondary(benchmark::State& state) {
    const Scenario sc = load("secondary_4bus.json");
    GridSystem grid = build_grid(sc);
    const auto eq = solve_grid_equilibrium(grid, grid.dae().params.values());
    SecondarySettings s;
    s.weights = WeightVector::uniform(grid.model().network.buses.size(), sc.secondary.rho);
    s.weights.w[0] = 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(run_recursive(grid, eq.p, eq.x, s));
}
BENCHMARK(BM_Secondary)->Unit(benchmark::kMillisecond);

void BM_ComplexFrequency(benchmark::State& state) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const Vec t = Vec::LinSpaced(n, 0.0, 1.0);
    CVec v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = std::polar(1.0 + 0.1 * t[k], 3.0 * t[k] * t[k]);
    for (auto _ : state) benchmark::DoNotOptimize(cf_from_samples(t, v, nominal_omega()));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComplexFrequency)->Range(1 << 10, 1 << 16)->Complexity(benchmark::oN);

}  // namespace

BENCHMARK_MAIN();
