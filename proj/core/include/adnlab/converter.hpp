#pragma once

#include <string>

#include "adnlab/smoothlim.hpp"
#include "adnlab/types.hpp"

namespace adnlab {

/// Grid-following converter: L filter, SRF-PLL, dq PI current control with
/// decoupling, Volt/VAR droop on the reactive set-point and a smooth
/// magnitude limit on the current reference.
struct GflParams {
    std::string id;
    std::string bus;
    double x_f = 0.1;   ///< filter reactance at omega0 (l_f = x_f / omega0)
    double r_f = 0.005;
    double kp_cc = 0.5;
    double ki_cc = 25.0;
    double kp_pll = 50.0;   ///< rad/s per pu
    double ki_pll = 1000.0; ///< rad/s² per pu
    double p_ref = 0.5;
    double kq = 0.0;
    double v_ref = 1.0;
    double q0 = 0.0;
    double i_max = 1.2;
    double k_lim = 10.0;
    double k_aw = 1.0;

    SmoothLimiter limiter() const { return {i_max, k_lim}; }
    void validate() const;
};

struct GflState {
    double theta = 0.0;  ///< PLL angle relative to the omega0 frame (unwrapped)
    double eps = 0.0;    ///< PLL integrator (rad/s)
    Complex i{0.0, 0.0};   ///< filter current, PLL frame
    Complex xi{0.0, 0.0};  ///< current-controller integrators
};

struct PllResidual {
    double theta_rate = 0.0;
    double eps_rate = 0.0;
    double omega_pll = 0.0;
    double v_q = 0.0;
};

/// Bus voltage expressed in the frame at angle theta.
inline Complex to_frame(double theta, Complex v) { return v * std::polar(1.0, -theta); }

PllResidual pll_residual(const GflParams& p, const GflState& s, Complex v_bus, double omega0);

/// Analytic derivatives of (dθ/dt, dε/dt) with respect to (θ, ε, v_D, v_Q).
Eigen::Matrix<double, 2, 4> pll_jacobian(const GflParams& p, const GflState& s, Complex v_bus);

/// Reactive set-point of the Volt/VAR droop.
double volt_var_q(const GflParams& p, double vmag);

/// Unlimited reference conj((p_ref + j q_ref) / v) in the PLL frame.
/// Throws DegenerateVoltageError below the voltage floor.
Complex current_reference_raw(const GflParams& p, Complex v_pll);

/// Limited reference sat_vector(raw).
Complex current_reference(const GflParams& p, Complex v_pll);

struct GflResidual {
    PllResidual pll;
    Complex i_rate{0.0, 0.0};
    Complex xi_rate{0.0, 0.0};
    Complex i_ref_raw{0.0, 0.0};  ///< set-point current plus correction, before the limiter
    Complex i_ref{0.0, 0.0};      ///< after the limiter
    Complex v_mod{0.0, 0.0};      ///< modulation voltage, PLL frame
    Complex injection{0.0, 0.0};  ///< current into the bus, network frame
};

/// `correction` is added to the set-point current before the limiter (PLL
/// frame); virtual-admittance loops use it. The set-point conversion uses the
/// voltage floor instead of throwing.
GflResidual gfl_residual(const GflParams& p, const GflState& s, Complex v_bus, double omega0,
                         Complex correction = {0.0, 0.0});

/// Minimal P/f and Q/V droop grid-forming converter behind a virtual impedance.
struct GfmDroopParams {
    std::string id;
    std::string bus;
    double m_p = 0.05 * nominal_omega();  ///< rad/s per pu
    double n_q = 0.05;
    double v_set = 1.0;
    double p_set = 0.0;
    double q_set = 0.0;
    double r_v = 0.01;
    double x_v = 0.1;  ///< virtual reactance at omega0
    double t_p = 0.02;
    double t_q = 0.02;

    void validate() const;
};

struct GfmState {
    double theta = 0.0;
    double p_f = 0.0;
    double q_f = 0.0;
    Complex i{0.0, 0.0};  ///< output current, network frame
};

struct GfmResidual {
    double theta_rate = 0.0;
    double p_rate = 0.0;
    double q_rate = 0.0;
    Complex i_residual{0.0, 0.0};  ///< l_v·di/dt
    double e_mag = 0.0;
    Complex e_internal{0.0, 0.0};  ///< E∠θ, network frame
    double p_meas = 0.0;
    double q_meas = 0.0;
    Complex injection{0.0, 0.0};
};

GfmResidual gfm_droop_residual(const GfmDroopParams& p, const GfmState& s, Complex v_bus);

}  // namespace adnlab
