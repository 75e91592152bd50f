#include "adnlab/netmodel.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

#include "adnlab/errors.hpp"
#include "adnlab/smoothlim.hpp"

namespace adnlab {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) {
        throw ModelError(msg);
    }
}

bool finite_all(std::initializer_list<double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void join(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

Complex GridSource::emf(double t) const { return std::polar(e_mag, angle + dw * t); }

void NetworkModel::validate() {
    require(omega0 > 0.0, "network: omega0 must be positive");
    require(lambda > 0.0 && std::isfinite(lambda), "network: loading factor must be positive");
    require(!buses.empty(), "network: no buses");

    bus_lookup_.clear();
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto& b = buses[i];
        require(!b.id.empty(), "network: bus with empty id");
        require(bus_lookup_.emplace(b.id, i).second, "network: duplicate bus id " + b.id);
        require(b.b_sh > 0.0 && std::isfinite(b.b_sh), "bus " + b.id + ": shunt susceptance must be > 0");
    }

    std::unordered_set<std::string> device_ids;
    auto unique_id = [&](const std::string& id, const char* kind) {
        require(!id.empty(), std::string(kind) + " with empty id");
        require(device_ids.insert(id).second, std::string("duplicate device id ") + id);
    };
    auto known_bus = [&](const std::string& bus, const std::string& owner) {
        require(bus_lookup_.contains(bus), owner + " references unknown bus " + bus);
    };

    DisjointSet ds(buses.size());
    for (const auto& br : branches) {
        unique_id(br.id, "branch");
        known_bus(br.from, "branch " + br.id);
        known_bus(br.to, "branch " + br.id);
        require(br.from != br.to, "branch " + br.id + ": from and to must differ");
        require(br.r >= 0.0 && br.x > 0.0 && finite_all({br.r, br.x}),
                "branch " + br.id + ": requires r >= 0 and x > 0");
        ds.join(bus_lookup_.at(br.from), bus_lookup_.at(br.to));
    }
    for (const auto& t : ltcs) {
        unique_id(t.id, "ltc");
        known_bus(t.from, "ltc " + t.id);
        known_bus(t.to, "ltc " + t.id);
        require(t.from != t.to, "ltc " + t.id + ": from and to must differ");
        require(t.x_t > 0.0, "ltc " + t.id + ": x_t must be > 0");
        require(t.n_min < t.n_max, "ltc " + t.id + ": n_min must be < n_max");
        require(t.t_ltc > 0.0, "ltc " + t.id + ": t_ltc must be > 0");
        require(t.d_band >= 0.0 && t.k_s > 0.0, "ltc " + t.id + ": d_band >= 0 and k_s > 0 required");
        ds.join(bus_lookup_.at(t.from), bus_lookup_.at(t.to));
    }
    const auto root = ds.find(0);
    for (std::size_t i = 1; i < buses.size(); ++i) {
        require(ds.find(i) == root, "network: disconnected graph, bus " + buses[i].id +
                                        " is not connected to " + buses[0].id);
    }

    std::unordered_set<std::string> pinned;
    for (const auto& s : sources) {
        unique_id(s.id, "source");
        known_bus(s.bus, "source " + s.id);
        require(s.e_mag > 0.0, "source " + s.id + ": e_mag must be > 0");
        require(s.r_g >= 0.0 && s.x_g >= 0.0, "source " + s.id + ": impedance must be >= 0");
        require(s.ideal() || s.x_g > 0.0, "source " + s.id + ": a resistive source needs x_g > 0");
        if (s.ideal()) {
            require(pinned.insert(s.bus).second, "bus " + s.bus + " is pinned by two ideal sources");
        }
    }
    for (const auto& l : zip_loads) {
        unique_id(l.id, "load");
        known_bus(l.bus, "load " + l.id);
        const double pa = l.a_z + l.a_i + l.a_p;
        const double pb = l.b_z + l.b_i + l.b_p;
        require(std::abs(pa - 1.0) < 1e-9 && std::abs(pb - 1.0) < 1e-9,
                "load " + l.id + ": ZIP fractions must sum to 1");
        for (double f : {l.a_z, l.a_i, l.a_p, l.b_z, l.b_i, l.b_p}) {
            require(f >= 0.0 && f <= 1.0, "load " + l.id + ": ZIP fractions must lie in [0, 1]");
        }
        require(l.v0 > 0.0, "load " + l.id + ": v0 must be > 0");
        require(l.t_load >= 0.0, "load " + l.id + ": t_load must be >= 0");
    }
    for (const auto& m : machines) {
        unique_id(m.id, "machine");
        known_bus(m.bus, "machine " + m.id);
        require(m.h > 0.0, "machine " + m.id + ": inertia h must be > 0");
        require(m.r_r > 0.0 && m.x_m > 0.0 && m.x_r >= 0.0 && m.x_s >= 0.0 && m.r_s >= 0.0,
                "machine " + m.id + ": invalid circuit parameters");
        require(m.t0_prime(omega0) > 0.0 && m.x_prime() > 0.0,
                "machine " + m.id + ": transient time constant and reactance must be > 0");
    }
}

std::size_t NetworkModel::bus_index(const std::string& id) const {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) {
        throw ModelError("unknown bus " + id);
    }
    return it->second;
}

Complex zip_power(const ZipLoad& load, double vmag, double lambda) {
    const double u = vmag / load.v0;
    const double p = load.p0 * (load.a_z * u * u + load.a_i * u + load.a_p);
    const double q = load.q0 * (load.b_z * u * u + load.b_i * u + load.b_p);
    return lambda * Complex(p, q);
}

Complex zip_injection_guarded(const ZipLoad& load, Complex v, double lambda) {
    const double vmag = std::abs(v);
    const Complex unit = vmag > 0.0 ? v / vmag : Complex(1.0, 0.0);
    const double v_eff = std::max(vmag, kVoltageFloor);
    // i = conj(S) / conj(v) split per component so that Z and I terms stay exact
    const Complex yz(load.p0 * load.a_z, -load.q0 * load.b_z);
    const Complex ci(load.p0 * load.a_i, -load.q0 * load.b_i);
    const Complex cp(load.p0 * load.a_p, -load.q0 * load.b_p);
    return lambda * (yz * v / (load.v0 * load.v0) + ci * unit / load.v0 + cp * unit / v_eff);
}

Complex zip_injection(const ZipLoad& load, Complex v, double lambda) {
    const double vmag = std::abs(v);
    if (vmag <= kVoltageFloor) {
        throw DegenerateVoltageError("load " + load.id + " at bus " + load.bus, vmag);
    }
    return zip_injection_guarded(load, v, lambda);
}

ImResidual im_residual(const InductionMachine& m, const ImState& s, Complex v, double omega0,
                       double torque_scale) {
    const double xp = m.x_prime();
    const double dx = m.x_open() - xp;
    ImResidual r;
    r.i_stator = (v - s.e) / Complex(m.r_s, xp);
    r.t_e = (s.e * std::conj(r.i_stator)).real();
    r.slip_rate = (torque_scale * m.t_mech - r.t_e) / (2.0 * m.h);
    const Complex j(0.0, 1.0);
    r.e_rate = -j * omega0 * s.slip * s.e - (s.e - j * dx * r.i_stator) / m.t0_prime(omega0);
    return r;
}

double ltc_residual(const LtcTransformer& t, double n, double v_reg) {
    const double drive = smooth_deadband(t.d_band, t.k_s, t.v_ref - v_reg);
    const double window = rate_window(n, t.n_min, t.n_max, t.k_s, drive);
    const double over = std::max(0.0, n - t.n_max);
    const double under = std::max(0.0, t.n_min - n);
    const double stop = kTapStopStiffness * (over * over - under * under);
    return (drive * window - stop) / t.t_ltc;
}

NetworkResidual network_residual(const NetworkModel& model, std::span<const Complex> bus_v,
                                 std::span<const Complex> branch_i,
                                 std::span<const Complex> injections) {
    if (bus_v.size() != model.buses.size() || injections.size() != model.buses.size() ||
        branch_i.size() != model.branches.size()) {
        throw ModelError("network_residual: state sizes do not match the model");
    }
    NetworkResidual res;
    res.branch.resize(model.branches.size());
    res.bus.assign(injections.begin(), injections.end());
    for (std::size_t k = 0; k < model.branches.size(); ++k) {
        const auto& br = model.branches[k];
        const auto f = model.bus_index(br.from);
        const auto t = model.bus_index(br.to);
        res.branch[k] = bus_v[f] - bus_v[t] - Complex(br.r, br.x) * branch_i[k];
        res.bus[f] -= branch_i[k];
        res.bus[t] += branch_i[k];
    }
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        res.bus[b] -= Complex(0.0, model.buses[b].b_sh) * bus_v[b];
    }
    return res;
}

}  // namespace adnlab
