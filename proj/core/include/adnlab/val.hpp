#pragma once

#include "adnlab/types.hpp"

namespace adnlab {

// Virtual admittance loop. The loop emulates an admittance y = g_v + j b_v
// connected between the converter bus and a virtual source v_nom∠θ_pll. With
// Δv = v_pll - v_nom, the admittance absorbs i_v = y·Δv; the converter adds
// -i_v to its current set-point (before the limiter), i.e. it injects the
// current the virtual admittance would supply.

enum class ValMode { off, dynamic, quasi };

struct ValGains {
    double g_v = 0.0;
    double b_v = 0.0;
    double v_nom = 1.0;
    double g_min = 0.0;
    double g_max = 50.0;
    double b_min = -50.0;
    double b_max = 50.0;

    Complex admittance() const { return {g_v, b_v}; }
    /// Box must be finite and non-empty; gains must lie inside it.
    void validate() const;
};

struct DvalState {
    Complex i_v{0.0, 0.0};
};

struct DvalResidual {
    Complex i_v_rate{0.0, 0.0};
    Complex i_v{0.0, 0.0};  ///< admittance current carried by the state
};

inline Complex voltage_deviation(const ValGains& g, Complex v_pll) { return v_pll - g.v_nom; }

/// Series equivalent z = 1/y realised as an RL-type branch whose derivative
/// coefficient is |z|/omega0:  (|z|/omega0)·di_v/dt = Δv - z·i_v.
/// Throws ConfigError for a zero admittance.
DvalResidual dval_residual(const ValGains& g, const DvalState& s, Complex v_pll, double omega0);

/// Quasi-stationary loop: i_v = y·Δv, no states.
Complex qval_reference(const ValGains& g, Complex v_pll);

}  // namespace adnlab
