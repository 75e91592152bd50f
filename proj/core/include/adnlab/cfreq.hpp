#pragma once

#include <string>

#include "adnlab/engine.hpp"
#include "adnlab/grid_system.hpp"

namespace adnlab {

/// Sampled complex frequency η = ρ + jω.
struct CfSeries {
    std::string source;
    Vec t;
    Vec rho;    ///< d ln|v| / dt (1/s)
    Vec omega;  ///< angular speed (rad/s), including the frame speed
};

/// Derivative of samples on an arbitrary increasing grid: three-point
/// Lagrange formulas, centred inside and one-sided at both ends (exact for
/// quadratics).
Vec sample_derivative(const Vec& t, const Vec& y);

/// Removes 2π jumps between consecutive samples.
Vec unwrap_angle(const Vec& angle);

/// Centred moving average over `window` samples (truncated at the ends);
/// window = 1 returns the input.
Vec moving_average(const Vec& y, int window);

/// Complex frequency of a sampled phasor expressed in a frame rotating at
/// `omega_frame`. Throws DegenerateVoltageError naming the time stamp when
/// |v| drops to the voltage floor.
CfSeries cf_from_samples(const Vec& t, const CVec& v, double omega_frame, const std::string& source = {},
                         int window = 1);

/// Same for the bus voltage states "<bus>.vd" / "<bus>.vq" of a trajectory.
CfSeries cf_from_trajectory(const Trajectory& traj, const std::string& bus, double omega_frame, int window = 1);

/// PLL frequency estimate ω0 + kp·v_q + ε evaluated pointwise (ρ is zero).
CfSeries pll_internal_frequency(const Trajectory& traj, const GridSystem& grid, const Vec& p,
                                const std::string& converter);

struct CfDecomposition {
    CfSeries synchronization;
    CfSeries regulation;
    CfSeries total;

    /// max over samples of |sync + regulation - total| (both parts).
    double additivity_residual() const;
};

/// Splits the complex frequency of an internal voltage m(t)·e^{jθ(t)} into the
/// synchronisation block j·dθ/dt and the regulation block η(m). The total is
/// computed independently from the product signal.
CfDecomposition decompose_samples(const Vec& t, const Vec& theta, const CVec& m, double omega_frame,
                                  int window = 1);

/// Grid-following units: θ is the PLL angle and m the modulation voltage in
/// the PLL frame. Grid-forming units: θ is the droop angle and m the internal
/// EMF magnitude. Throws ConfigError for an unknown converter id.
CfDecomposition decompose_converter_cf(const Trajectory& traj, const GridSystem& grid, const Vec& p,
                                       const std::string& converter, int window = 1);

}  // namespace adnlab
