#pragma once

#include <string>
#include <vector>

#include "adnlab/grid_system.hpp"

namespace adnlab {

struct MeasurementSnapshot {
    int iteration = 0;
    std::vector<std::string> bus_ids;
    Vec v;  ///< |v| per bus
    std::vector<std::string> load_ids;
    Vec load_i;  ///< |i| per ZIP load, then per induction machine
    std::vector<std::string> converter_ids;
    Vec p_ref;
    Vec q_ref;
    Vec converter_i;  ///< |i| of each grid-following unit
};

MeasurementSnapshot collect_measurements(const GridSystem& grid, const Vec& x, const Vec& p, int iteration = 0);

struct WeightVector {
    Vec w;  ///< per bus, non-negative, not all zero
    double rho = 0.0;

    /// Unit weights on every bus.
    static WeightVector uniform(std::size_t buses, double rho = 0.0);
    void validate(std::size_t buses) const;
};

/// Gain vector layout: (conv1.g_v, conv1.b_v, conv2.g_v, ...) over the
/// grid-following units whose virtual admittance loop is enabled.
struct GainLayout {
    std::vector<std::string> names;  ///< parameter names
    std::vector<std::size_t> params;  ///< parameter indices
    std::vector<std::size_t> units;   ///< owning GFL unit per entry
    Vec lower;
    Vec upper;

    static GainLayout from(const GridSystem& grid, const Vec& p);
    Vec values(const Vec& p) const;
    void assign(Vec& p, const Vec& gains) const;
    Eigen::Index size() const { return static_cast<Eigen::Index>(names.size()); }
};

struct Sensitivity {
    Mat voltage;  ///< d|v_bus| / d gain (buses × gains)
    Mat current;  ///< d|i_conv| / d gain (GFL units × gains)
    std::vector<bool> usable;
};

/// Forward differences on each gain with re-solved equilibria. Columns whose
/// perturbed equilibrium cannot be found are flagged unusable and zeroed.
Sensitivity gain_sensitivity(const GridSystem& grid, const Vec& x, const Vec& p, const GainLayout& gains,
                             double step = 1e-4, bool central = false);

struct UpdateProblem {
    Vec v;         ///< measured |v| per bus
    double v_nom = 1.0;
    Mat s;         ///< voltage sensitivity
    WeightVector weights;
    Vec gains;     ///< current gains
    Vec lower;     ///< gain box
    Vec upper;
    Mat c;         ///< current sensitivity (rows: constrained converters); may be empty
    Vec margin;    ///< i_max - |i| per constrained converter
    std::vector<bool> usable;
    double alpha = 0.7;
};

struct GainUpdate {
    Vec delta;      ///< full QP step
    Vec gains_new;  ///< gains + alpha·delta
    double objective_before = 0.0;
    double objective_predicted = 0.0;
    std::vector<bool> lower_active;
    std::vector<bool> upper_active;
    std::vector<bool> current_active;
    Vec multipliers;  ///< box multipliers (lower then upper), then current-limit multipliers
    double kkt_residual = 0.0;
    bool no_op = false;
};

/// Solves min Σ w_i (v_i + (S·Δg)_i - v_nom)² + ρ‖Δg‖² subject to the gain box
/// and the linearised converter-current limits with a primal active-set
/// method. Throws ConfigError for an empty box.
GainUpdate solve_update(const UpdateProblem& problem);

struct SecondarySettings {
    WeightVector weights;
    double alpha = 0.7;
    int max_iter = 30;
    double tol_v = 0.01;
    double v_nom = 1.0;
    double step = 1e-4;
    int max_halvings = 5;
};

struct SecondaryIteration {
    int iteration = 0;
    MeasurementSnapshot snapshot;
    Vec gains;
    double objective = 0.0;
    double max_deviation = 0.0;
    GainUpdate update;
    double alpha = 0.0;  ///< trust step finally used, 0 when no update was applied
};

struct SecondaryHistory {
    GainLayout layout;
    std::vector<SecondaryIteration> iterations;
    bool converged = false;
    std::string stop_reason;
    Vec final_x;
    Vec final_p;
};

/// Weighted objective Σ w_i (|v_i| - v_nom)².
double weighted_objective(const Vec& v, const WeightVector& w, double v_nom);

/// Periodic loop: equilibrium, measurements, sensitivities, update.
SecondaryHistory run_recursive(const GridSystem& grid, const Vec& p, const Vec& guess,
                               const SecondarySettings& settings);

}  // namespace adnlab
