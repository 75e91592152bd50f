#include "adnlab/converter.hpp"

#include <cmath>

#include "adnlab/errors.hpp"

namespace adnlab {

void GflParams::validate() const {
    if (!(x_f > 0.0)) throw ModelError("converter " + id + ": filter reactance must be > 0");
    if (!(r_f >= 0.0)) throw ModelError("converter " + id + ": filter resistance must be >= 0");
    if (!(i_max > 0.0)) throw ModelError("converter " + id + ": i_max must be > 0");
    for (double g : {kp_cc, ki_cc, kp_pll, ki_pll, k_aw}) {
        if (!(g >= 0.0)) throw ModelError("converter " + id + ": gains must be >= 0");
    }
    limiter().validate();
}

PllResidual pll_residual(const GflParams& p, const GflState& s, Complex v_bus, double omega0) {
    PllResidual r;
    r.v_q = to_frame(s.theta, v_bus).imag();
    r.eps_rate = p.ki_pll * r.v_q;
    r.theta_rate = p.kp_pll * r.v_q + s.eps;
    r.omega_pll = omega0 + r.theta_rate;
    return r;
}

Eigen::Matrix<double, 2, 4> pll_jacobian(const GflParams& p, const GflState& s, Complex v_bus) {
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    const double v_d = to_frame(s.theta, v_bus).real();
    // v_q = -sin(θ) v_D + cos(θ) v_Q
    const Eigen::RowVector4d dvq(-v_d, 0.0, -sn, c);
    Eigen::Matrix<double, 2, 4> jac;
    jac.row(0) = p.kp_pll * dvq;
    jac(0, 1) += 1.0;
    jac.row(1) = p.ki_pll * dvq;
    return jac;
}

double volt_var_q(const GflParams& p, double vmag) { return p.q0 + p.kq * (p.v_ref - vmag); }

namespace {

Complex setpoint_current(const GflParams& p, Complex v_pll, double v_eff) {
    const double vmag = std::abs(v_pll);
    const Complex unit = vmag > 0.0 ? v_pll / vmag : Complex(1.0, 0.0);
    const Complex s_conj(p.p_ref, -volt_var_q(p, vmag));
    // conj(S / v) = conj(S) / conj(v) = conj(S) · v / |v|²
    return s_conj * unit / v_eff;
}

}  // namespace

Complex current_reference_raw(const GflParams& p, Complex v_pll) {
    const double vmag = std::abs(v_pll);
    if (vmag <= kVoltageFloor) {
        throw DegenerateVoltageError("converter " + p.id + " at bus " + p.bus, vmag);
    }
    return setpoint_current(p, v_pll, vmag);
}

Complex current_reference(const GflParams& p, Complex v_pll) {
    return sat_vector(p.limiter(), current_reference_raw(p, v_pll));
}

GflResidual gfl_residual(const GflParams& p, const GflState& s, Complex v_bus, double omega0,
                         Complex correction) {
    GflResidual r;
    r.pll = pll_residual(p, s, v_bus, omega0);
    const Complex v_pll = to_frame(s.theta, v_bus);
    const double v_eff = std::max(std::abs(v_pll), kVoltageFloor);
    r.i_ref_raw = setpoint_current(p, v_pll, v_eff) + correction;
    r.i_ref = sat_vector(p.limiter(), r.i_ref_raw);

    // Back-calculation against the reference limiter, per axis.
    const Complex e_raw = r.i_ref_raw - s.i;
    r.xi_rate = {antiwindup_residual(s.xi.real(), e_raw.real(), r.i_ref_raw.real(), r.i_ref.real(), p.k_aw),
                 antiwindup_residual(s.xi.imag(), e_raw.imag(), r.i_ref_raw.imag(), r.i_ref.imag(), p.k_aw)};
    const Complex u = p.kp_cc * (r.i_ref - s.i) + p.ki_cc * s.xi;

    const double w_ratio = r.pll.omega_pll / omega0;
    const Complex coupling = rot90(w_ratio * p.x_f * s.i);
    r.v_mod = u + v_pll + coupling;
    r.i_rate = (omega0 / p.x_f) * (r.v_mod - v_pll - p.r_f * s.i - coupling);
    r.injection = s.i * std::polar(1.0, s.theta);
    return r;
}

void GfmDroopParams::validate() const {
    if (!(m_p > 0.0)) throw ModelError("gfm " + id + ": m_p must be > 0");
    if (!(n_q >= 0.0)) throw ModelError("gfm " + id + ": n_q must be >= 0");
    if (!(x_v > 0.0)) throw ModelError("gfm " + id + ": virtual reactance must be > 0");
    if (!(r_v >= 0.0)) throw ModelError("gfm " + id + ": virtual resistance must be >= 0");
    if (!(t_p > 0.0 && t_q > 0.0)) throw ModelError("gfm " + id + ": filter time constants must be > 0");
}

GfmResidual gfm_droop_residual(const GfmDroopParams& p, const GfmState& s, Complex v_bus) {
    GfmResidual r;
    const Complex s_out = v_bus * std::conj(s.i);
    r.p_meas = s_out.real();
    r.q_meas = s_out.imag();
    r.p_rate = (r.p_meas - s.p_f) / p.t_p;
    r.q_rate = (r.q_meas - s.q_f) / p.t_q;
    r.theta_rate = -p.m_p * (s.p_f - p.p_set);
    r.e_mag = p.v_set - p.n_q * (s.q_f - p.q_set);
    r.e_internal = std::polar(r.e_mag, s.theta);
    r.i_residual = r.e_internal - v_bus - Complex(p.r_v, p.x_v) * s.i;
    r.injection = s.i;
    return r;
}

}  // namespace adnlab
