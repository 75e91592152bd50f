#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adnlab/types.hpp"

namespace adnlab {

// All quantities are per unit on a single system base. Reactances and
// susceptances are given at the nominal angular frequency omega0, so a branch
// with reactance x has inductance l = x / omega0 and a bus with shunt
// susceptance b has capacitance c = b / omega0. Phasors live in a dq frame
// rotating at omega0 and are stored as complex numbers d + jq.

enum class NetworkMode {
    dynamic,    ///< branch currents and bus voltages are states (pure ODE)
    algebraic,  ///< network equations are algebraic (zero mass entries)
};

struct Bus {
    std::string id;
    double b_sh = 1e-3;  ///< shunt susceptance, must be > 0
};

struct RlBranch {
    std::string id;
    std::string from;
    std::string to;
    double r = 0.0;
    double x = 0.1;
};

struct ZipLoad {
    std::string id;
    std::string bus;
    double p0 = 0.0;
    double q0 = 0.0;
    double a_z = 0.0, a_i = 0.0, a_p = 1.0;
    double b_z = 0.0, b_i = 0.0, b_p = 1.0;
    double v0 = 1.0;
    /// Current-tracking lag (s). Zero makes the load purely static.
    double t_load = 0.0;
};

/// Third-order induction motor (stator transients neglected).
struct InductionMachine {
    std::string id;
    std::string bus;
    double r_s = 0.01;
    double x_s = 0.1;
    double x_r = 0.08;
    double x_m = 3.0;
    double r_r = 0.02;
    double h = 0.5;
    double t_mech = 0.5;

    double x_prime() const { return x_s + x_m * x_r / (x_m + x_r); }
    double x_open() const { return x_s + x_m; }
    double t0_prime(double omega0) const { return (x_r + x_m) / (omega0 * r_r); }
};

struct ImState {
    double slip = 0.0;
    Complex e{0.0, 0.0};
};

struct ImResidual {
    double slip_rate = 0.0;
    Complex e_rate{0.0, 0.0};
    Complex i_stator{0.0, 0.0};  ///< drawn from the bus
    double t_e = 0.0;
};

/// Transformer with a continuously varying tap on the `from` side. The
/// open-circuit secondary voltage is n·v_from; x_t sits on the `to` side and
/// the `to` bus voltage is regulated.
struct LtcTransformer {
    std::string id;
    std::string from;
    std::string to;
    double x_t = 0.05;
    double n_min = 0.9;
    double n_max = 1.1;
    double t_ltc = 30.0;
    double v_ref = 1.0;
    double d_band = 0.01;
    double k_s = 200.0;
};

/// Stiffness of the quadratic end stop that holds the tap at its range.
inline constexpr double kTapStopStiffness = 1e3;

struct GridSource {
    std::string id;
    std::string bus;
    double e_mag = 1.0;
    double r_g = 0.0;
    double x_g = 0.0;
    double angle = 0.0;
    double dw = 0.0;  ///< frequency offset of the EMF w.r.t. omega0 (rad/s)

    /// A source with zero impedance pins its bus voltage.
    bool ideal() const { return r_g == 0.0 && x_g == 0.0; }
    Complex emf(double t) const;
};

struct NetworkModel {
    double omega0 = nominal_omega();
    NetworkMode mode = NetworkMode::dynamic;
    std::vector<Bus> buses;
    std::vector<RlBranch> branches;
    std::vector<GridSource> sources;
    std::vector<ZipLoad> zip_loads;
    std::vector<InductionMachine> machines;
    std::vector<LtcTransformer> ltcs;
    double lambda = 1.0;

    /// Rebuilds the id lookup and checks every invariant. Throws ModelError.
    void validate();

    std::size_t bus_index(const std::string& id) const;
    bool has_bus(const std::string& id) const { return bus_lookup_.contains(id); }

private:
    std::unordered_map<std::string, std::size_t> bus_lookup_;
};

/// Complex power S(V) = P + jQ of a ZIP load at voltage magnitude vmag.
Complex zip_power(const ZipLoad& load, double vmag, double lambda);

/// Current drawn by a ZIP load. Throws DegenerateVoltageError when
/// |v| <= kVoltageFloor.
Complex zip_injection(const ZipLoad& load, Complex v, double lambda);

/// Same as zip_injection but freezes the constant-power current at its
/// floor value (same angle) instead of throwing.
Complex zip_injection_guarded(const ZipLoad& load, Complex v, double lambda);

ImResidual im_residual(const InductionMachine& m, const ImState& s, Complex v, double omega0,
                       double torque_scale = 1.0);

/// Tap-rate dn/dt.
double ltc_residual(const LtcTransformer& t, double n, double v_reg);

struct NetworkResidual {
    std::vector<Complex> branch;  ///< l·di/dt per branch
    std::vector<Complex> bus;     ///< c·dv/dt per bus
};

/// Electromagnetic residuals of lines and bus shunts. `injections` are the
/// currents injected into each bus by devices.
NetworkResidual network_residual(const NetworkModel& model, std::span<const Complex> bus_v,
                                 std::span<const Complex> branch_i,
                                 std::span<const Complex> injections);

}  // namespace adnlab
