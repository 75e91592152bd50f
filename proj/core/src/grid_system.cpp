#include "adnlab/grid_system.hpp"

#include <unordered_set>

#include "adnlab/errors.hpp"

namespace adnlab {

using Index = Eigen::Index;

void GridModel::validate() {
    network.validate();
    std::unordered_set<std::string> ids;
    for (const auto& b : network.branches) ids.insert(b.id);
    for (const auto& s : network.sources) ids.insert(s.id);
    for (const auto& l : network.zip_loads) ids.insert(l.id);
    for (const auto& m : network.machines) ids.insert(m.id);
    for (const auto& t : network.ltcs) ids.insert(t.id);
    auto check = [&](const std::string& id, const std::string& bus, const char* kind) {
        if (id.empty()) throw ModelError(std::string(kind) + " with empty id");
        if (!ids.insert(id).second) throw ModelError("duplicate device id " + id);
        if (!network.has_bus(bus)) throw ModelError(std::string(kind) + " " + id + " references unknown bus " + bus);
    };
    for (const auto& u : gfl) {
        check(u.params.id, u.params.bus, "converter");
        u.params.validate();
        if (u.val_mode != ValMode::off) {
            u.val.validate();
            if (u.val_mode == ValMode::dynamic && std::abs(u.val.admittance()) == 0.0) {
                throw ConfigError("converter " + u.params.id +
                                  ": dynamic virtual admittance needs a non-zero admittance");
            }
        }
    }
    for (const auto& g : gfm) {
        check(g.id, g.bus, "gfm");
        g.validate();
    }
}

struct GridSystem::Layout {
    struct Binding {
        std::string name;
        std::function<double&(GridModel&)> field;
    };

    GridModel base;
    std::vector<Binding> bindings;
    Index size = 0;
    std::vector<Index> bus, branch, source, load, machine, ltc, gfl, val, gfm;
    std::vector<int> pin_source;  ///< per bus, index of the ideal source or -1
    std::vector<std::size_t> load_bus, machine_bus, source_bus, ltc_from, ltc_to, gfl_bus, gfm_bus;

    void apply(GridModel& m, const Vec& p) const {
        for (std::size_t k = 0; k < bindings.size(); ++k) {
            bindings[k].field(m) = p[static_cast<Index>(k)];
        }
    }

    void evaluate(double t, const Vec& x, const Vec& p, Vec* f, GridDetail* out) const;
};

namespace {

Complex pair(const Vec& x, Index at) { return {x[at], x[at + 1]}; }

void put(Vec& f, Index at, Complex z) {
    f[at] = z.real();
    f[at + 1] = z.imag();
}

template <class Device>
using FieldList = std::vector<std::pair<const char*, double Device::*>>;

const FieldList<Bus>& bus_fields() {
    static const FieldList<Bus> f{{"b_sh", &Bus::b_sh}};
    return f;
}
const FieldList<RlBranch>& branch_fields() {
    static const FieldList<RlBranch> f{{"r", &RlBranch::r}, {"x", &RlBranch::x}};
    return f;
}
const FieldList<ZipLoad>& load_fields() {
    static const FieldList<ZipLoad> f{{"p0", &ZipLoad::p0}, {"q0", &ZipLoad::q0}, {"v0", &ZipLoad::v0},
                                      {"t_load", &ZipLoad::t_load}};
    return f;
}
const FieldList<InductionMachine>& machine_fields() {
    static const FieldList<InductionMachine> f{
        {"r_s", &InductionMachine::r_s}, {"x_s", &InductionMachine::x_s}, {"x_r", &InductionMachine::x_r},
        {"x_m", &InductionMachine::x_m}, {"r_r", &InductionMachine::r_r}, {"h", &InductionMachine::h},
        {"t_mech", &InductionMachine::t_mech}};
    return f;
}
const FieldList<LtcTransformer>& ltc_fields() {
    static const FieldList<LtcTransformer> f{
        {"x_t", &LtcTransformer::x_t},     {"n_min", &LtcTransformer::n_min},   {"n_max", &LtcTransformer::n_max},
        {"t_ltc", &LtcTransformer::t_ltc}, {"v_ref", &LtcTransformer::v_ref},   {"d_band", &LtcTransformer::d_band},
        {"k_s", &LtcTransformer::k_s}};
    return f;
}
const FieldList<GflParams>& gfl_fields() {
    static const FieldList<GflParams> f{
        {"x_f", &GflParams::x_f},       {"r_f", &GflParams::r_f},       {"kp_cc", &GflParams::kp_cc},
        {"ki_cc", &GflParams::ki_cc},   {"kp_pll", &GflParams::kp_pll}, {"ki_pll", &GflParams::ki_pll},
        {"p_ref", &GflParams::p_ref},   {"kq", &GflParams::kq},         {"v_ref", &GflParams::v_ref},
        {"q0", &GflParams::q0},         {"i_max", &GflParams::i_max},   {"k_lim", &GflParams::k_lim},
        {"k_aw", &GflParams::k_aw}};
    return f;
}
const FieldList<ValGains>& val_fields() {
    static const FieldList<ValGains> f{{"g_v", &ValGains::g_v}, {"b_v", &ValGains::b_v}, {"v_nom", &ValGains::v_nom}};
    return f;
}
const FieldList<GfmDroopParams>& gfm_fields() {
    static const FieldList<GfmDroopParams> f{
        {"m_p", &GfmDroopParams::m_p},     {"n_q", &GfmDroopParams::n_q},   {"v_set", &GfmDroopParams::v_set},
        {"p_set", &GfmDroopParams::p_set}, {"q_set", &GfmDroopParams::q_set}, {"r_v", &GfmDroopParams::r_v},
        {"x_v", &GfmDroopParams::x_v},     {"t_p", &GfmDroopParams::t_p},   {"t_q", &GfmDroopParams::t_q}};
    return f;
}

}  // namespace

void GridSystem::Layout::evaluate(double t, const Vec& x, const Vec& p, Vec* f, GridDetail* out) const {
    GridModel m = base;
    apply(m, p);
    const auto& net = m.network;
    const bool dynamic = net.mode == NetworkMode::dynamic;
    const double w0 = net.omega0;
    const double lambda = net.lambda;

    const std::size_t nb = net.buses.size();
    std::vector<Complex> v(nb), inj(nb, Complex{});
    for (std::size_t b = 0; b < nb; ++b) v[b] = pair(x, bus[b]);
    std::vector<Complex> ib(net.branches.size());
    for (std::size_t k = 0; k < ib.size(); ++k) ib[k] = pair(x, branch[k]);

    Vec scratch;
    if (f == nullptr) {
        scratch.resize(size);
        f = &scratch;
    }
    Vec& r = *f;

    if (out != nullptr) {
        *out = GridDetail{};
        out->bus_v = v;
        out->branch_i = ib;
        out->source_i.assign(net.sources.size(), Complex{});
    }

    for (std::size_t k = 0; k < net.sources.size(); ++k) {
        const auto& s = net.sources[k];
        if (s.ideal()) continue;
        const Complex i = pair(x, source[k]);
        const Complex res = s.emf(t) - v[source_bus[k]] - Complex(s.r_g, s.x_g) * i;
        put(r, source[k], dynamic ? res * (w0 / s.x_g) : res);
        inj[source_bus[k]] += i;
        if (out) out->source_i[k] = i;
    }

    for (std::size_t k = 0; k < net.zip_loads.size(); ++k) {
        const auto& ld = net.zip_loads[k];
        const Complex i_static = zip_injection_guarded(ld, v[load_bus[k]], lambda);
        Complex i = i_static;
        if (load[k] >= 0) {
            i = pair(x, load[k]);
            put(r, load[k], (i_static - i) / ld.t_load);
        }
        inj[load_bus[k]] -= i;
        if (out) out->load_i.push_back(i);
    }

    for (std::size_t k = 0; k < net.machines.size(); ++k) {
        const auto& mc = net.machines[k];
        const Index at = machine[k];
        const ImState st{x[at], pair(x, at + 1)};
        const auto res = im_residual(mc, st, v[machine_bus[k]], w0, lambda);
        r[at] = res.slip_rate;
        put(r, at + 1, res.e_rate);
        inj[machine_bus[k]] -= res.i_stator;
        if (out) out->machine_i.push_back(res.i_stator);
    }

    for (std::size_t k = 0; k < net.ltcs.size(); ++k) {
        const auto& tr = net.ltcs[k];
        const Index at = ltc[k];
        const double n = x[at];
        const Complex i = pair(x, at + 1);
        const Complex vf = v[ltc_from[k]];
        const Complex vt = v[ltc_to[k]];
        r[at] = ltc_residual(tr, n, std::abs(vt));
        const Complex res = n * vf - vt - Complex(0.0, tr.x_t) * i;
        put(r, at + 1, dynamic ? res * (w0 / tr.x_t) : res);
        inj[ltc_to[k]] += i;
        inj[ltc_from[k]] -= n * i;
        if (out) {
            out->taps.push_back(n);
            out->ltc_i.push_back(i);
        }
    }

    for (std::size_t k = 0; k < m.gfl.size(); ++k) {
        const auto& u = m.gfl[k];
        const Index at = gfl[k];
        GflState st;
        st.theta = x[at];
        st.eps = x[at + 1];
        st.i = pair(x, at + 2);
        st.xi = pair(x, at + 4);
        const Complex vb = v[gfl_bus[k]];
        const Complex v_pll = to_frame(st.theta, vb);
        Complex i_v{};
        if (u.val_mode == ValMode::dynamic) {
            const auto dv = dval_residual(u.val, DvalState{pair(x, val[k])}, v_pll, w0);
            put(r, val[k], dv.i_v_rate);
            i_v = dv.i_v;
        } else if (u.val_mode == ValMode::quasi) {
            i_v = qval_reference(u.val, v_pll);
        }
        const auto res = gfl_residual(u.params, st, vb, w0, -i_v);
        r[at] = res.pll.theta_rate;
        r[at + 1] = res.pll.eps_rate;
        put(r, at + 2, res.i_rate);
        put(r, at + 4, res.xi_rate);
        inj[gfl_bus[k]] += res.injection;
        if (out) {
            out->gfl_state.push_back(st);
            out->gfl.push_back(res);
            out->gfl_val.push_back(i_v);
        }
    }

    for (std::size_t k = 0; k < m.gfm.size(); ++k) {
        const auto& g = m.gfm[k];
        const Index at = gfm[k];
        GfmState st{x[at], x[at + 1], x[at + 2], pair(x, at + 3)};
        const auto res = gfm_droop_residual(g, st, v[gfm_bus[k]]);
        r[at] = res.theta_rate;
        r[at + 1] = res.p_rate;
        r[at + 2] = res.q_rate;
        put(r, at + 3, dynamic ? res.i_residual * (w0 / g.x_v) : res.i_residual);
        inj[gfm_bus[k]] += res.injection;
        if (out) {
            out->gfm_state.push_back(st);
            out->gfm.push_back(res);
        }
    }

    const auto nr = network_residual(net, v, ib, inj);
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        put(r, branch[k], dynamic ? nr.branch[k] * (w0 / br.x) : nr.branch[k]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
        if (pin_source[b] >= 0) {
            const auto& s = net.sources[static_cast<std::size_t>(pin_source[b])];
            put(r, bus[b], v[b] - s.emf(t));
            if (out) out->source_i[static_cast<std::size_t>(pin_source[b])] = -nr.bus[b];
        } else {
            put(r, bus[b], dynamic ? nr.bus[b] * (w0 / net.buses[b].b_sh) : nr.bus[b]);
        }
    }
}

GridSystem::GridSystem(GridModel model) {
    model.validate();
    auto lay = std::make_shared<Layout>();
    lay->base = std::move(model);
    Layout& L = *lay;
    const auto& net = L.base.network;
    const bool dynamic = net.mode == NetworkMode::dynamic;

    std::vector<std::string> names;
    std::vector<double> mass;
    auto add = [&](const std::string& name, double m) {
        names.push_back(name);
        mass.push_back(m);
        return static_cast<Index>(names.size() - 1);
    };
    auto add_pair = [&](const std::string& id, const char* d, const char* q, double m) {
        const Index at = add(id + "." + d, m);
        add(id + "." + q, m);
        return at;
    };
    const double net_mass = dynamic ? 1.0 : 0.0;

    L.pin_source.assign(net.buses.size(), -1);
    for (std::size_t k = 0; k < net.sources.size(); ++k) {
        L.source_bus.push_back(net.bus_index(net.sources[k].bus));
        if (net.sources[k].ideal()) L.pin_source[L.source_bus.back()] = static_cast<int>(k);
    }
    for (std::size_t b = 0; b < net.buses.size(); ++b) {
        L.bus.push_back(add_pair(net.buses[b].id, "vd", "vq", L.pin_source[b] >= 0 ? 0.0 : net_mass));
    }
    for (const auto& br : net.branches) L.branch.push_back(add_pair(br.id, "id", "iq", net_mass));
    for (const auto& s : net.sources) L.source.push_back(s.ideal() ? -1 : add_pair(s.id, "id", "iq", net_mass));
    for (const auto& ld : net.zip_loads) {
        L.load_bus.push_back(net.bus_index(ld.bus));
        L.load.push_back(ld.t_load > 0.0 ? add_pair(ld.id, "id", "iq", 1.0) : -1);
    }
    for (const auto& mc : net.machines) {
        L.machine_bus.push_back(net.bus_index(mc.bus));
        L.machine.push_back(add(mc.id + ".s", 1.0));
        add_pair(mc.id, "ed", "eq", 1.0);
    }
    for (const auto& tr : net.ltcs) {
        L.ltc_from.push_back(net.bus_index(tr.from));
        L.ltc_to.push_back(net.bus_index(tr.to));
        L.ltc.push_back(add(tr.id + ".n", 1.0));
        add_pair(tr.id, "id", "iq", net_mass);
    }
    for (const auto& u : L.base.gfl) {
        const auto& id = u.params.id;
        L.gfl_bus.push_back(net.bus_index(u.params.bus));
        L.gfl.push_back(add(id + ".theta", 1.0));
        add(id + ".eps", 1.0);
        add_pair(id, "id", "iq", 1.0);
        add_pair(id, "xd", "xq", 1.0);
        L.val.push_back(u.val_mode == ValMode::dynamic ? add_pair(id, "ivd", "ivq", 1.0) : -1);
    }
    for (const auto& g : L.base.gfm) {
        L.gfm_bus.push_back(net.bus_index(g.bus));
        L.gfm.push_back(add(g.id + ".theta", 1.0));
        add(g.id + ".pf", 1.0);
        add(g.id + ".qf", 1.0);
        add_pair(g.id, "id", "iq", net_mass);
    }
    L.size = static_cast<Index>(names.size());

    // Parameter bindings.
    auto bind = [&](std::string name, std::function<double&(GridModel&)> fn) {
        L.bindings.push_back({std::move(name), std::move(fn)});
    };
    bind("lambda", [](GridModel& m) -> double& { return m.network.lambda; });
    auto bind_all = [&](auto& fields, const std::string& id, auto locate) {
        for (const auto& [field, ptr] : fields) {
            bind(id + "." + field, [locate, ptr = ptr](GridModel& m) -> double& { return locate(m).*ptr; });
        }
    };
    for (std::size_t k = 0; k < net.buses.size(); ++k) {
        bind_all(bus_fields(), net.buses[k].id, [k](GridModel& m) -> Bus& { return m.network.buses[k]; });
    }
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
        bind_all(branch_fields(), net.branches[k].id,
                 [k](GridModel& m) -> RlBranch& { return m.network.branches[k]; });
    }
    for (std::size_t k = 0; k < net.sources.size(); ++k) {
        const auto& id = net.sources[k].id;
        using Fields = FieldList<GridSource>;
        static const Fields all{{"e_mag", &GridSource::e_mag}, {"angle", &GridSource::angle},
                                {"dw", &GridSource::dw},       {"r_g", &GridSource::r_g},
                                {"x_g", &GridSource::x_g}};
        const Fields used(all.begin(), net.sources[k].ideal() ? all.begin() + 3 : all.end());
        bind_all(used, id, [k](GridModel& m) -> GridSource& { return m.network.sources[k]; });
    }
    for (std::size_t k = 0; k < net.zip_loads.size(); ++k) {
        bind_all(load_fields(), net.zip_loads[k].id,
                 [k](GridModel& m) -> ZipLoad& { return m.network.zip_loads[k]; });
    }
    for (std::size_t k = 0; k < net.machines.size(); ++k) {
        bind_all(machine_fields(), net.machines[k].id,
                 [k](GridModel& m) -> InductionMachine& { return m.network.machines[k]; });
    }
    for (std::size_t k = 0; k < net.ltcs.size(); ++k) {
        bind_all(ltc_fields(), net.ltcs[k].id, [k](GridModel& m) -> LtcTransformer& { return m.network.ltcs[k]; });
    }
    for (std::size_t k = 0; k < L.base.gfl.size(); ++k) {
        const auto& id = L.base.gfl[k].params.id;
        bind_all(gfl_fields(), id, [k](GridModel& m) -> GflParams& { return m.gfl[k].params; });
        if (L.base.gfl[k].val_mode != ValMode::off) {
            bind_all(val_fields(), id, [k](GridModel& m) -> ValGains& { return m.gfl[k].val; });
        }
    }
    for (std::size_t k = 0; k < L.base.gfm.size(); ++k) {
        bind_all(gfm_fields(), L.base.gfm[k].id, [k](GridModel& m) -> GfmDroopParams& { return m.gfm[k]; });
    }

    GridModel probe = L.base;
    for (const auto& b : L.bindings) dae_.params.add(b.name, b.field(probe));

    dae_.state_names = std::move(names);
    dae_.mass = Eigen::Map<const Vec>(mass.data(), static_cast<Index>(mass.size()));

    std::shared_ptr<const Layout> shared = lay;
    layout_ = shared;
    dae_.residual = [shared](double t, const Vec& x, const Vec& p, Vec& f) {
        if (f.size() != shared->size) f.resize(shared->size);
        shared->evaluate(t, x, p, &f, nullptr);
    };

    for (const auto& u : L.base.gfl) dae_.monitor_names.push_back(u.params.id + ".limit");
    for (const auto& tr : net.ltcs) dae_.monitor_names.push_back(tr.id + ".tap");
    dae_.monitors = [shared](const Vec& x, const Vec& p) {
        GridDetail d;
        shared->evaluate(0.0, x, p, nullptr, &d);
        GridModel m = shared->base;
        shared->apply(m, p);
        Vec out(static_cast<Index>(d.gfl.size() + d.taps.size()));
        Index j = 0;
        for (std::size_t k = 0; k < d.gfl.size(); ++k) {
            out[j++] = std::abs(d.gfl[k].i_ref_raw) / m.gfl[k].params.i_max;
        }
        for (std::size_t k = 0; k < d.taps.size(); ++k) {
            const auto& tr = m.network.ltcs[k];
            const double mid = 0.5 * (tr.n_max + tr.n_min);
            const double half = 0.5 * (tr.n_max - tr.n_min);
            out[j++] = std::abs(d.taps[k] - mid) / half;
        }
        return out;
    };
}

const GridModel& GridSystem::model() const { return layout_->base; }

GridModel GridSystem::model_at(const Vec& p) const {
    GridModel m = layout_->base;
    layout_->apply(m, p);
    return m;
}

Index GridSystem::bus_state(std::size_t bus) const { return layout_->bus.at(bus); }
Index GridSystem::gfl_state(std::size_t k) const { return layout_->gfl.at(k); }

GridDetail GridSystem::detail(const Vec& x, const Vec& p, double t) const {
    GridDetail d;
    layout_->evaluate(t, x, p, nullptr, &d);
    return d;
}

Vec GridSystem::flat_start() const {
    const Layout& L = *layout_;
    const auto& net = L.base.network;
    Vec x = Vec::Zero(L.size);
    for (std::size_t b = 0; b < net.buses.size(); ++b) {
        Complex v0(1.0, 0.0);
        if (L.pin_source[b] >= 0) v0 = net.sources[static_cast<std::size_t>(L.pin_source[b])].emf(0.0);
        put(x, L.bus[b], v0);
    }
    for (std::size_t k = 0; k < net.zip_loads.size(); ++k) {
        if (L.load[k] >= 0) put(x, L.load[k], zip_injection_guarded(net.zip_loads[k], 1.0, net.lambda));
    }
    for (std::size_t k = 0; k < net.machines.size(); ++k) {
        x[L.machine[k]] = 0.01;
        put(x, L.machine[k] + 1, Complex(0.9, -0.1));
    }
    for (std::size_t k = 0; k < net.ltcs.size(); ++k) x[L.ltc[k]] = 1.0;
    for (std::size_t k = 0; k < L.base.gfl.size(); ++k) {
        const auto& pr = L.base.gfl[k].params;
        const Complex i = sat_vector(pr.limiter(), Complex(pr.p_ref, -pr.q0));
        put(x, L.gfl[k] + 2, i);
        if (pr.ki_cc > 0.0) put(x, L.gfl[k] + 4, pr.r_f * i / pr.ki_cc);
    }
    for (std::size_t k = 0; k < L.base.gfm.size(); ++k) {
        const auto& g = L.base.gfm[k];
        x[L.gfm[k] + 1] = g.p_set;
        x[L.gfm[k] + 2] = g.q_set;
        put(x, L.gfm[k] + 3, Complex(g.p_set, -g.q_set));
    }
    return x;
}

EquilibriumSolution solve_grid_equilibrium(const GridSystem& grid, const Vec& p, const Vec& guess) {
    const DaeSystem& sys = grid.dae();
    const Vec x0 = guess.size() == sys.size() ? guess : grid.flat_start();
    try {
        return newton_equilibrium(sys, x0, p);
    } catch (const NumericalError&) {
        const auto li = static_cast<Index>(sys.params.index("lambda"));
        const double target = p[li];
        Vec q = p;
        Vec x = x0;
        try {
            constexpr int kSteps = 10;
            EquilibriumSolution sol;
            for (int s = 1; s <= kSteps; ++s) {
                q[li] = target * s / kSteps;
                sol = newton_equilibrium(sys, x, q);
                x = sol.x;
            }
            return sol;
        } catch (const NumericalError&) {
        }
        throw;
    }
}

}  // namespace adnlab
