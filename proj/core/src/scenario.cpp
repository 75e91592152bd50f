#include "adnlab/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "adnlab/errors.hpp"

namespace adnlab {

using json = nlohmann::json;

namespace {

template <class D>
using Fields = std::vector<std::pair<const char*, double D::*>>;

const Fields<Bus> kBusFields{{"b_sh", &Bus::b_sh}};
const Fields<RlBranch> kBranchFields{{"r", &RlBranch::r}, {"x", &RlBranch::x}};
const Fields<GridSource> kSourceFields{{"e_mag", &GridSource::e_mag}, {"r_g", &GridSource::r_g},
                                       {"x_g", &GridSource::x_g},     {"angle", &GridSource::angle},
                                       {"dw", &GridSource::dw}};
const Fields<ZipLoad> kLoadFields{{"p0", &ZipLoad::p0}, {"q0", &ZipLoad::q0}, {"a_z", &ZipLoad::a_z},
                                  {"a_i", &ZipLoad::a_i}, {"a_p", &ZipLoad::a_p}, {"b_z", &ZipLoad::b_z},
                                  {"b_i", &ZipLoad::b_i}, {"b_p", &ZipLoad::b_p}, {"v0", &ZipLoad::v0},
                                  {"t_load", &ZipLoad::t_load}};
const Fields<InductionMachine> kMachineFields{
    {"r_s", &InductionMachine::r_s}, {"x_s", &InductionMachine::x_s}, {"x_r", &InductionMachine::x_r},
    {"x_m", &InductionMachine::x_m}, {"r_r", &InductionMachine::r_r}, {"h", &InductionMachine::h},
    {"t_mech", &InductionMachine::t_mech}};
const Fields<LtcTransformer> kLtcFields{
    {"x_t", &LtcTransformer::x_t},     {"n_min", &LtcTransformer::n_min}, {"n_max", &LtcTransformer::n_max},
    {"t_ltc", &LtcTransformer::t_ltc}, {"v_ref", &LtcTransformer::v_ref}, {"d_band", &LtcTransformer::d_band},
    {"k_s", &LtcTransformer::k_s}};
const Fields<GflParams> kGflFields{
    {"x_f", &GflParams::x_f},       {"r_f", &GflParams::r_f},       {"kp_cc", &GflParams::kp_cc},
    {"ki_cc", &GflParams::ki_cc},   {"kp_pll", &GflParams::kp_pll}, {"ki_pll", &GflParams::ki_pll},
    {"p_ref", &GflParams::p_ref},   {"kq", &GflParams::kq},         {"v_ref", &GflParams::v_ref},
    {"q0", &GflParams::q0},         {"i_max", &GflParams::i_max},   {"k_lim", &GflParams::k_lim},
    {"k_aw", &GflParams::k_aw}};
const Fields<ValGains> kValFields{{"g_v", &ValGains::g_v},     {"b_v", &ValGains::b_v},     {"v_nom", &ValGains::v_nom},
                                  {"g_min", &ValGains::g_min}, {"g_max", &ValGains::g_max}, {"b_min", &ValGains::b_min},
                                  {"b_max", &ValGains::b_max}};
const Fields<GfmDroopParams> kGfmFields{
    {"m_p", &GfmDroopParams::m_p},     {"n_q", &GfmDroopParams::n_q},     {"v_set", &GfmDroopParams::v_set},
    {"p_set", &GfmDroopParams::p_set}, {"q_set", &GfmDroopParams::q_set}, {"r_v", &GfmDroopParams::r_v},
    {"x_v", &GfmDroopParams::x_v},     {"t_p", &GfmDroopParams::t_p},     {"t_q", &GfmDroopParams::t_q}};

/// Reads keys of one JSON object and rejects anything it was not asked for.
class Reader {
public:
    Reader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(ctx_ + ": " + msg); }

    const json* find(const char* key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const char* key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(std::string("'") + key + "' must be a number");
            out = v->get<double>();
            if (!std::isfinite(out)) fail(std::string("'") + key + "' must be finite");
        }
    }

    /// null means unbounded.
    void bound(const char* key, double& out, double unbounded) {
        if (const json* v = find(key)) {
            if (v->is_null()) {
                out = unbounded;
            } else {
                number(key, out);
            }
        }
    }

    void integer(const char* key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(std::string("'") + key + "' must be an integer");
            out = v->get<int>();
        }
    }

    void string(const char* key, std::string& out, bool required = false) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(std::string("'") + key + "' must be a string");
            out = v->get<std::string>();
        } else if (required) {
            fail(std::string("missing required key '") + key + "'");
        }
    }

    template <class D>
    void fields(D& d, const Fields<D>& list) {
        for (const auto& [key, ptr] : list) number(key, d.*ptr);
    }

    const json* array(const char* key) {
        const json* v = find(key);
        if (v && !v->is_array()) fail(std::string("'") + key + "' must be an array");
        return v;
    }

    const json* object(const char* key) {
        const json* v = find(key);
        if (v && !v->is_object()) fail(std::string("'") + key + "' must be an object");
        return v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.contains(it.key())) fail("unknown key '" + it.key() + "'");
        }
    }

    const std::string& ctx() const { return ctx_; }

private:
    const json& j_;
    std::string ctx_;
    std::set<std::string> used_;
};

template <class D>
json write_fields(const D& d, const Fields<D>& list) {
    json j = json::object();
    for (const auto& [key, ptr] : list) j[key] = d.*ptr;
    return j;
}

json write_bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string item_ctx(const std::string& table, std::size_t i, const json& item) {
    std::string ctx = table + "[" + std::to_string(i) + "]";
    if (item.is_object() && item.contains("id") && item["id"].is_string()) {
        ctx += " (" + item["id"].get<std::string>() + ")";
    }
    return ctx;
}

template <class Fn>
void each(Reader& r, const char* key, Fn&& fn) {
    if (const json* arr = r.array(key)) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            Reader item((*arr)[i], item_ctx(key, i, (*arr)[i]));
            fn(item);
            item.finish();
        }
    }
}

ValMode parse_val_mode(Reader& r, const std::string& s) {
    if (s == "off") return ValMode::off;
    if (s == "dynamic") return ValMode::dynamic;
    if (s == "quasi") return ValMode::quasi;
    r.fail("val mode must be one of off, dynamic, quasi (got '" + s + "')");
}

const char* val_mode_name(ValMode m) {
    switch (m) {
        case ValMode::off: return "off";
        case ValMode::dynamic: return "dynamic";
        case ValMode::quasi: return "quasi";
    }
    return "off";
}

std::vector<std::string> string_list(Reader& r, const char* key) {
    std::vector<std::string> out;
    if (const json* arr = r.array(key)) {
        for (const auto& v : *arr) {
            if (!v.is_string()) r.fail(std::string("'") + key + "' must contain strings");
            out.push_back(v.get<std::string>());
        }
    }
    return out;
}

std::string position(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

void check_references(const Scenario& s, const std::string& origin) {
    GridSystem grid = build_grid(s);
    const auto& params = grid.dae().params;
    auto need_param = [&](const std::string& name, const std::string& where) {
        if (!params.contains(name)) throw ScenarioError(origin + ": " + where + " references unknown parameter " + name);
    };
    need_param(s.continuation.param, "analysis.continuation.param");
    if (!s.boundary.param2.empty()) need_param(s.boundary.param2, "analysis.boundary.param2");
    for (const auto& [name, v] : s.simulation.perturb) need_param(name, "analysis.simulation.perturb");
    for (const auto& [bus, w] : s.secondary.weights) {
        if (!s.model.network.has_bus(bus)) throw ScenarioError(origin + ": analysis.secondary.weights references unknown bus " + bus);
        if (!(w >= 0.0)) throw ScenarioError(origin + ": analysis.secondary.weights must be >= 0");
    }
    for (const auto& bus : s.cf.buses) {
        if (!s.model.network.has_bus(bus)) throw ScenarioError(origin + ": analysis.cf.buses references unknown bus " + bus);
    }
    for (const auto& c : s.cf.converters) {
        bool found = false;
        for (const auto& u : s.model.gfl) found |= u.params.id == c;
        for (const auto& g : s.model.gfm) found |= g.id == c;
        if (!found) throw ScenarioError(origin + ": analysis.cf.converters references unknown converter " + c);
    }
    if (s.cf.window < 1) throw ScenarioError(origin + ": analysis.cf.window must be >= 1");
    for (std::size_t i = 1; i < s.boundary.grid.size(); ++i) {
        if (s.boundary.grid[i] < s.boundary.grid[i - 1]) throw ScenarioError(origin + ": analysis.boundary.grid must be sorted");
    }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(origin + ": parse error at " + position(text, e.byte) + ": " + e.what());
    }

    Scenario s;
    Reader top(doc, origin);
    top.string("name", s.name);
    if (const json* base = top.object("base")) {
        Reader r(*base, "base");
        r.number("frequency_hz", s.frequency_hz);
        r.number("s_mva", s.s_mva);
        r.number("v_kv", s.v_kv);
        r.finish();
    }
    if (!(s.frequency_hz > 0.0)) throw ScenarioError(origin + ": base.frequency_hz must be > 0");

    auto& net = s.model.network;
    net.omega0 = nominal_omega(s.frequency_hz);
    if (const json* nj = top.object("network")) {
        Reader r(*nj, "network");
        std::string mode = "dynamic";
        r.string("mode", mode);
        if (mode == "dynamic") {
            net.mode = NetworkMode::dynamic;
        } else if (mode == "algebraic") {
            net.mode = NetworkMode::algebraic;
        } else {
            r.fail("mode must be 'dynamic' or 'algebraic'");
        }
        r.number("lambda", net.lambda);
        r.finish();
    }

    each(top, "buses", [&](Reader& r) {
        Bus b;
        r.string("id", b.id, true);
        r.fields(b, kBusFields);
        net.buses.push_back(b);
    });
    each(top, "branches", [&](Reader& r) {
        RlBranch b;
        r.string("id", b.id, true);
        r.string("from", b.from, true);
        r.string("to", b.to, true);
        r.fields(b, kBranchFields);
        net.branches.push_back(b);
    });
    each(top, "sources", [&](Reader& r) {
        GridSource g;
        r.string("id", g.id, true);
        r.string("bus", g.bus, true);
        r.fields(g, kSourceFields);
        net.sources.push_back(g);
    });
    each(top, "zip_loads", [&](Reader& r) {
        ZipLoad l;
        r.string("id", l.id, true);
        r.string("bus", l.bus, true);
        r.fields(l, kLoadFields);
        net.zip_loads.push_back(l);
    });
    each(top, "induction_machines", [&](Reader& r) {
        InductionMachine m;
        r.string("id", m.id, true);
        r.string("bus", m.bus, true);
        r.fields(m, kMachineFields);
        net.machines.push_back(m);
    });
    each(top, "ltcs", [&](Reader& r) {
        LtcTransformer t;
        r.string("id", t.id, true);
        r.string("from", t.from, true);
        r.string("to", t.to, true);
        r.fields(t, kLtcFields);
        net.ltcs.push_back(t);
    });
    each(top, "gfl", [&](Reader& r) {
        GflUnit u;
        r.string("id", u.params.id, true);
        r.string("bus", u.params.bus, true);
        r.fields(u.params, kGflFields);
        if (const json* vj = r.object("val")) {
            Reader v(*vj, r.ctx() + ".val");
            std::string mode = "off";
            v.string("mode", mode);
            u.val_mode = parse_val_mode(v, mode);
            v.fields(u.val, kValFields);
            v.finish();
        }
        s.model.gfl.push_back(u);
    });
    each(top, "gfm", [&](Reader& r) {
        GfmDroopParams g;
        r.string("id", g.id, true);
        r.string("bus", g.bus, true);
        r.fields(g, kGfmFields);
        s.model.gfm.push_back(g);
    });
    if (const json* pj = top.object("parameters")) {
        for (auto it = pj->begin(); it != pj->end(); ++it) {
            if (!it->is_string()) throw ScenarioError(origin + ": parameters." + it.key() + " must be a string");
            s.parameters[it.key()] = it->get<std::string>();
        }
    }

    if (const json* aj = top.object("analysis")) {
        Reader a(*aj, "analysis");
        if (const json* cj = a.object("continuation")) {
            Reader r(*cj, "analysis.continuation");
            auto& c = s.continuation;
            r.string("param", c.param);
            r.number("h_init", c.settings.h_init);
            r.number("h_min", c.settings.h_min);
            r.number("h_max", c.settings.h_max);
            r.integer("max_steps", c.settings.max_steps);
            r.integer("max_corrector_iter", c.settings.max_corrector_iter);
            r.integer("direction", c.settings.direction);
            r.bound("min", c.settings.p_min, -INFINITY);
            r.bound("max", c.settings.p_max, INFINITY);
            r.finish();
        }
        if (const json* bj = a.object("boundary")) {
            Reader r(*bj, "analysis.boundary");
            r.string("param2", s.boundary.param2);
            if (const json* g = r.array("grid")) {
                for (const auto& v : *g) {
                    if (!v.is_number()) r.fail("grid must contain numbers");
                    s.boundary.grid.push_back(v.get<double>());
                }
            }
            r.finish();
        }
        if (const json* sj = a.object("simulation")) {
            Reader r(*sj, "analysis.simulation");
            r.number("t_end", s.simulation.t_end);
            r.number("h", s.simulation.h);
            if (const json* pj = r.object("perturb")) {
                for (auto it = pj->begin(); it != pj->end(); ++it) {
                    if (!it->is_number()) r.fail("perturb." + it.key() + " must be a number");
                    s.simulation.perturb[it.key()] = it->get<double>();
                }
            }
            r.finish();
        }
        if (const json* sj = a.object("secondary")) {
            Reader r(*sj, "analysis.secondary");
            auto& c = s.secondary;
            if (const json* wj = r.object("weights")) {
                for (auto it = wj->begin(); it != wj->end(); ++it) {
                    if (!it->is_number()) r.fail("weights." + it.key() + " must be a number");
                    c.weights[it.key()] = it->get<double>();
                }
            }
            r.number("rho", c.rho);
            r.number("alpha", c.alpha);
            r.integer("max_iter", c.max_iter);
            r.number("tol_v", c.tol_v);
            r.number("v_nom", c.v_nom);
            r.finish();
        }
        if (const json* cj = a.object("cf")) {
            Reader r(*cj, "analysis.cf");
            s.cf.buses = string_list(r, "buses");
            s.cf.converters = string_list(r, "converters");
            r.integer("window", s.cf.window);
            r.finish();
        }
        a.finish();
    }
    top.finish();

    try {
        s.model.validate();
    } catch (const Error& e) {
        throw ScenarioError(origin + ": " + e.what());
    }
    try {
        check_references(s, origin);
    } catch (const ScenarioError&) {
        throw;
    } catch (const Error& e) {
        throw ScenarioError(origin + ": " + e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.filename().string());
}

std::string canonical_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["base"] = {{"frequency_hz", s.frequency_hz}, {"s_mva", s.s_mva}, {"v_kv", s.v_kv}};
    const auto& net = s.model.network;
    j["network"] = {{"mode", net.mode == NetworkMode::dynamic ? "dynamic" : "algebraic"}, {"lambda", net.lambda}};

    j["buses"] = json::array();
    for (const auto& b : net.buses) {
        json o = write_fields(b, kBusFields);
        o["id"] = b.id;
        j["buses"].push_back(o);
    }
    j["branches"] = json::array();
    for (const auto& b : net.branches) {
        json o = write_fields(b, kBranchFields);
        o["id"] = b.id;
        o["from"] = b.from;
        o["to"] = b.to;
        j["branches"].push_back(o);
    }
    j["sources"] = json::array();
    for (const auto& g : net.sources) {
        json o = write_fields(g, kSourceFields);
        o["id"] = g.id;
        o["bus"] = g.bus;
        j["sources"].push_back(o);
    }
    j["zip_loads"] = json::array();
    for (const auto& l : net.zip_loads) {
        json o = write_fields(l, kLoadFields);
        o["id"] = l.id;
        o["bus"] = l.bus;
        j["zip_loads"].push_back(o);
    }
    j["induction_machines"] = json::array();
    for (const auto& m : net.machines) {
        json o = write_fields(m, kMachineFields);
        o["id"] = m.id;
        o["bus"] = m.bus;
        j["induction_machines"].push_back(o);
    }
    j["ltcs"] = json::array();
    for (const auto& t : net.ltcs) {
        json o = write_fields(t, kLtcFields);
        o["id"] = t.id;
        o["from"] = t.from;
        o["to"] = t.to;
        j["ltcs"].push_back(o);
    }
    j["gfl"] = json::array();
    for (const auto& u : s.model.gfl) {
        json o = write_fields(u.params, kGflFields);
        o["id"] = u.params.id;
        o["bus"] = u.params.bus;
        json v = write_fields(u.val, kValFields);
        v["mode"] = val_mode_name(u.val_mode);
        o["val"] = v;
        j["gfl"].push_back(o);
    }
    j["gfm"] = json::array();
    for (const auto& g : s.model.gfm) {
        json o = write_fields(g, kGfmFields);
        o["id"] = g.id;
        o["bus"] = g.bus;
        j["gfm"].push_back(o);
    }
    j["parameters"] = json::object();
    for (const auto& [k, v] : s.parameters) j["parameters"][k] = v;

    const auto& c = s.continuation;
    json analysis;
    analysis["continuation"] = {{"param", c.param},
                                {"h_init", c.settings.h_init},
                                {"h_min", c.settings.h_min},
                                {"h_max", c.settings.h_max},
                                {"max_steps", c.settings.max_steps},
                                {"max_corrector_iter", c.settings.max_corrector_iter},
                                {"direction", c.settings.direction},
                                {"min", write_bound(c.settings.p_min)},
                                {"max", write_bound(c.settings.p_max)}};
    analysis["boundary"] = {{"param2", s.boundary.param2}, {"grid", s.boundary.grid}};
    json perturb = json::object();
    for (const auto& [k, v] : s.simulation.perturb) perturb[k] = v;
    analysis["simulation"] = {{"t_end", s.simulation.t_end}, {"h", s.simulation.h}, {"perturb", perturb}};
    json weights = json::object();
    for (const auto& [k, v] : s.secondary.weights) weights[k] = v;
    analysis["secondary"] = {{"weights", weights},          {"rho", s.secondary.rho},
                             {"alpha", s.secondary.alpha},  {"max_iter", s.secondary.max_iter},
                             {"tol_v", s.secondary.tol_v},  {"v_nom", s.secondary.v_nom}};
    analysis["cf"] = {{"buses", s.cf.buses}, {"converters", s.cf.converters}, {"window", s.cf.window}};
    j["analysis"] = analysis;
    return j.dump(2) + "\n";
}

GridSystem build_grid(const Scenario& scenario) {
    GridSystem grid(scenario.model);
    for (const auto& [alias, target] : scenario.parameters) {
        if (!grid.dae().params.contains(target)) {
            throw ScenarioError("parameter alias " + alias + " references unknown parameter " + target);
        }
        grid.dae().params.alias(alias, target);
    }
    return grid;
}

}  // namespace adnlab
