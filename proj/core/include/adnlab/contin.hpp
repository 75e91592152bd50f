#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "adnlab/engine.hpp"

namespace adnlab {

struct ContinuationSettings {
    double h_init = 0.01;
    double h_min = 1e-5;
    double h_max = 0.05;
    int max_steps = 2000;
    double p_min = -std::numeric_limits<double>::infinity();
    double p_max = std::numeric_limits<double>::infinity();
    /// Initial direction of the parameter: +1 or -1.
    int direction = 1;
    int max_corrector_iter = 10;
    /// Stop a few points after the first bifurcation is detected.
    bool stop_at_first = false;
};

struct BranchPoint {
    Vec x;
    double lambda = 0.0;
    double s = 0.0;  ///< arclength
    Vec tangent;     ///< unit tangent in (x, lambda)
    double dlambda_ds = 0.0;
    SpectrumReport spectrum;
    bool has_spectrum = false;
    double algebraic_condition = 1.0;
    Vec limiter_activity;  ///< one entry per system monitor
};

struct Branch {
    std::string param;
    std::vector<std::string> state_names;
    std::vector<std::string> monitor_names;
    std::vector<BranchPoint> points;
    std::string stop_reason;
};

enum class BifurcationKind { snb, hb, lib, sib_candidate };

const char* to_string(BifurcationKind kind);

struct BifurcationRecord {
    BifurcationKind kind = BifurcationKind::snb;
    double lambda = 0.0;
    Vec x;
    std::vector<Complex> crossing;  ///< critical eigenvalue(s) at the located point
    double tolerance = 0.0;         ///< width of the final parameter bracket
    std::size_t segment = 0;        ///< index of the branch segment [segment, segment + 1]
    int monitor = -1;               ///< LIB only: index of the monitor that crossed 1
};

/// Pseudo-arclength continuation in `param` from a converged equilibrium.
/// Corrector failures at the minimum step truncate the branch; the reason is
/// stored in Branch::stop_reason.
Branch continue_branch(const DaeSystem& sys, const EquilibriumSolution& start, const std::string& param,
                       const ContinuationSettings& settings = {});

/// Detects sign changes of the bifurcation test functions along the branch
/// (without refinement).
std::vector<BifurcationRecord> classify_bifurcations(const Branch& branch);

/// Refines a bifurcation inside the bracket [a, b] by bisection along the
/// branch until the parameter bracket is below 1e-6·max(1, |λ|), followed by
/// one secant step on the test function. Throws ConfigError when the test
/// function has the same sign at both ends.
BifurcationRecord locate_bifurcation(const DaeSystem& sys, const Vec& p, const std::string& param,
                                     const BranchPoint& a, const BranchPoint& b, BifurcationKind kind,
                                     int monitor = -1);

/// classify_bifurcations followed by locate_bifurcation on every record.
/// SIB candidates are reported at the detecting point without refinement.
std::vector<BifurcationRecord> find_bifurcations(const DaeSystem& sys, const Vec& p, const Branch& branch);

using EquilibriumSolver = std::function<EquilibriumSolution(const Vec& p, const Vec& guess)>;

struct BoundaryRow {
    double param2 = 0.0;
    std::optional<BifurcationRecord> record;  ///< empty: no bifurcation on the branch
    std::string error;                        ///< non-empty when the row failed
};

struct Boundary2D {
    std::string param1;
    std::string param2;
    std::vector<BoundaryRow> rows;
};

/// For every value of `param2`, re-solves the base equilibrium, continues in
/// `param1` and records the first located bifurcation. Rows are independent;
/// a failing row is recorded and the sweep proceeds.
Boundary2D trace_boundary_2d(const DaeSystem& sys, const Vec& p, const Vec& guess, const std::string& param1,
                             const std::string& param2, const std::vector<double>& grid,
                             const ContinuationSettings& settings, const EquilibriumSolver& solver = {});

struct LimitCycleOptions {
    double perturbation = 1e-3;
    double amplitude_floor = 1e-6;
    double rel_tol = 1e-3;
    int max_windows = 400;
    int steps_per_period = 200;
};

struct LimitCycleResult {
    double amplitude = 0.0;
    bool converged = false;
    double t_final = 0.0;
};

/// Amplitude of the oscillation that develops at `lambda_probe` after a
/// perturbation along the critical eigenvector. Integrates in windows of
/// 20/|Im| seconds until the half peak-to-peak amplitude of `observable`
/// settles or decays below the floor (then 0 is returned).
LimitCycleResult limit_cycle_amplitude(const DaeSystem& sys, const Vec& p, const std::string& param,
                                       const BifurcationRecord& hb, double lambda_probe,
                                       const std::string& observable, const LimitCycleOptions& options = {});

}  // namespace adnlab
