#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adnlab/types.hpp"

namespace adnlab {

/// Named scalar parameters. Aliases resolve to the same slot.
class ParamSet {
public:
    std::size_t add(const std::string& name, double value);
    void alias(const std::string& alias, const std::string& target);

    bool contains(std::string_view name) const;
    std::size_t index(std::string_view name) const;

    double get(std::string_view name) const { return values_[static_cast<Eigen::Index>(index(name))]; }
    void set(std::string_view name, double value) { values_[static_cast<Eigen::Index>(index(name))] = value; }

    const Vec& values() const { return values_; }
    Vec& values() { return values_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> lookup_;
    Vec values_;
};

/// Semi-explicit system M·dx/dt = F(t, x, p) with a diagonal mass whose
/// entries are either zero (algebraic row) or positive (dynamic row).
struct DaeSystem {
    using Residual = std::function<void(double t, const Vec& x, const Vec& p, Vec& f)>;
    using Monitor = std::function<Vec(const Vec& x, const Vec& p)>;

    std::vector<std::string> state_names;
    Vec mass;
    ParamSet params;
    Residual residual;
    /// Optional scalar observables, e.g. limiter activity levels.
    std::vector<std::string> monitor_names;
    Monitor monitors;

    Eigen::Index size() const { return mass.size(); }
    Vec evaluate(const Vec& x, const Vec& p, double t = 0.0) const;
    Vec evaluate(const Vec& x) const { return evaluate(x, params.values()); }
    Eigen::Index state_index(std::string_view name) const;
    std::vector<Eigen::Index> dynamic_indices() const;
    std::vector<Eigen::Index> algebraic_indices() const;
};

inline constexpr double kEquilibriumTol = 1e-9;

struct NewtonOptions {
    double tol = kEquilibriumTol;
    int max_iter = 50;
    double min_damping = 0x1p-20;
};

struct EquilibriumSolution {
    Vec x;
    Vec p;
    double residual_norm = 0.0;
    int iterations = 0;
};

/// Damped Newton with backtracking halving on ‖F‖₂.
/// Throws ConvergenceError or SingularityError.
EquilibriumSolution newton_equilibrium(const DaeSystem& sys, const Vec& x0, const Vec& p,
                                       const NewtonOptions& opt = {});

/// Central differences with h_i = 1e-6·max(1, |x_i|).
Mat jacobian_fd(const DaeSystem& sys, const Vec& x, const Vec& p, double t = 0.0);

/// dF/dp_k by central differences.
Vec parameter_derivative_fd(const DaeSystem& sys, const Vec& x, const Vec& p, std::size_t k);

/// Algebraic blocks with a condition number above this are treated as singular.
inline constexpr double kAlgebraicConditionLimit = 1e12;

struct ReducedMatrix {
    Mat a;
    double algebraic_condition = 1.0;
};

/// A = M_f⁻¹ (f_x - f_y g_y⁻¹ g_x). Throws SingularityError when the
/// algebraic block is singular.
ReducedMatrix reduced_state_matrix(const DaeSystem& sys, const Vec& x, const Vec& p);
ReducedMatrix reduced_state_matrix(const Mat& jacobian, const Vec& mass);

/// Eigenvalues with |Im| at or below this are treated as real.
inline constexpr double kOscillationFloor = 1e-3;

struct SpectrumReport {
    CVec eigenvalues;  ///< descending real part
    double rightmost_real = -INFINITY;
    bool has_oscillatory = false;
    double dominant_damping = 1.0;  ///< of the rightmost pair with |Im| > kOscillationFloor
    double dominant_frequency_hz = 0.0;

    int unstable_real() const;
    int unstable_complex() const;
    int unstable() const { return unstable_real() + unstable_complex(); }
};

SpectrumReport eigenvalues(const Mat& m);

struct Trajectory {
    std::vector<std::string> state_names;
    Vec times;
    Mat states;  ///< one row per sample

    Eigen::Index samples() const { return times.size(); }
    Vec column(std::string_view name) const;
    Vec at(Eigen::Index row) const { return states.row(row).transpose(); }
};

struct IntegrateOptions {
    double newton_tol = 1e-10;
    int max_newton = 8;
};

/// Fixed-step trapezoidal rule; algebraic rows are enforced at each new
/// point. The step is adjusted to h' = t_end / round(t_end / h).
Trajectory integrate(const DaeSystem& sys, const Vec& x0, const Vec& p, double t_end, double h,
                     const IntegrateOptions& opt = {}, double t0 = 0.0);

}  // namespace adnlab
