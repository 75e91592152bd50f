#include "adnlab/run.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

#include "adnlab/cfreq.hpp"
#include "adnlab/csv.hpp"
#include "adnlab/errors.hpp"
#include "adnlab/secondary.hpp"

#ifndef ADNLAB_VERSION
#define ADNLAB_VERSION "0.0.0"
#endif

namespace adnlab {

using Index = Eigen::Index;
namespace fs = std::filesystem;

const char* version() { return ADNLAB_VERSION; }

std::optional<Command> parse_command(std::string_view name) {
    if (name == "equilibrium") return Command::equilibrium;
    if (name == "continue") return Command::continuation;
    if (name == "boundary2d") return Command::boundary2d;
    if (name == "simulate") return Command::simulate;
    if (name == "secondary") return Command::secondary;
    if (name == "cf") return Command::cf;
    return std::nullopt;
}

const char* command_name(Command c) {
    switch (c) {
        case Command::equilibrium: return "equilibrium";
        case Command::continuation: return "continue";
        case Command::boundary2d: return "boundary2d";
        case Command::simulate: return "simulate";
        case Command::secondary: return "secondary";
        case Command::cf: return "cf";
    }
    return "?";
}

std::vector<double> parse_grid(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ':') {
            parts.push_back(text.substr(start, i - start));
            start = i + 1;
        }
    }
    auto bad = [&]() { return ConfigError("grid must look like a:b:n, got '" + std::string(text) + "'"); };
    if (parts.size() != 3) throw bad();
    double a = 0.0, b = 0.0;
    long n = 0;
    auto num = [&](std::string_view s, auto& out) {
        const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw bad();
    };
    num(parts[0], a);
    num(parts[1], b);
    num(parts[2], n);
    if (n < 1 || !(a <= b)) throw bad();
    std::vector<double> out;
    for (long i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

namespace {

struct Context {
    const Scenario& scenario;
    GridSystem grid;
    fs::path out_dir;
    const RunOptions& options;
    std::ostream* log;
    std::vector<std::string> written;

    void say(const std::string& msg) const {
        if (log && !options.quiet) *log << msg << '\n';
    }

    void save(const CsvTable& table, const std::string& name) {
        table.write(out_dir / name);
        written.push_back(name);
    }
};

std::vector<std::string> bus_ids(const GridSystem& grid) {
    std::vector<std::string> out;
    for (const auto& b : grid.model().network.buses) out.push_back(b.id);
    return out;
}

EquilibriumSolution base_equilibrium(Context& ctx) {
    const auto sol = solve_grid_equilibrium(ctx.grid, ctx.grid.dae().params.values());
    ctx.say("equilibrium: converged in " + std::to_string(sol.iterations) + " iterations, residual " +
            format_number(sol.residual_norm));
    return sol;
}

void cmd_equilibrium(Context& ctx) {
    const auto sol = base_equilibrium(ctx);
    const auto& sys = ctx.grid.dae();
    CsvTable states({"state", "value"});
    for (Index i = 0; i < sys.size(); ++i) states.row().add(sys.state_names[static_cast<std::size_t>(i)]).add(sol.x[i]);
    ctx.save(states, "equilibrium_states.csv");

    const GridDetail d = ctx.grid.detail(sol.x, sol.p);
    CsvTable buses({"bus", "vd", "vq", "vmag", "angle"});
    const auto ids = bus_ids(ctx.grid);
    for (std::size_t b = 0; b < ids.size(); ++b) {
        buses.row().add(ids[b]).add(d.bus_v[b].real()).add(d.bus_v[b].imag()).add(std::abs(d.bus_v[b])).add(std::arg(d.bus_v[b]));
        ctx.say("  |v(" + ids[b] + ")| = " + format_number(std::abs(d.bus_v[b])));
    }
    ctx.save(buses, "equilibrium_buses.csv");

    const auto red = reduced_state_matrix(sys, sol.x, sol.p);
    const auto spec = eigenvalues(red.a);
    CsvTable eig({"index", "real", "imag"});
    for (Index i = 0; i < spec.eigenvalues.size(); ++i) {
        eig.row().add_int(i).add(spec.eigenvalues[i].real()).add(spec.eigenvalues[i].imag());
    }
    ctx.save(eig, "equilibrium_spectrum.csv");
    ctx.say("  rightmost eigenvalue real part " + format_number(spec.rightmost_real));
}

ContinuationSettings continuation_settings(const Context& ctx) {
    ContinuationSettings s = ctx.scenario.continuation.settings;
    if (ctx.options.steps) s.max_steps = *ctx.options.steps;
    return s;
}

std::string continuation_param(const Context& ctx) {
    return ctx.options.param ? *ctx.options.param : ctx.scenario.continuation.param;
}

void cmd_continue(Context& ctx) {
    const auto sol = base_equilibrium(ctx);
    const auto& sys = ctx.grid.dae();
    const std::string param = continuation_param(ctx);
    const Branch branch = continue_branch(sys, sol, param, continuation_settings(ctx));
    ctx.say("continuation in " + param + ": " + std::to_string(branch.points.size()) + " points, " + branch.stop_reason);

    std::vector<std::string> header{"s", "lambda", "rightmost_re", "unstable_real", "unstable_complex", "dlambda_ds"};
    for (const auto& m : branch.monitor_names) header.push_back(m);
    const auto ids = bus_ids(ctx.grid);
    for (const auto& b : ids) header.push_back(b + ".vmag");
    for (const auto& s : branch.state_names) header.push_back(s);
    CsvTable table(header);
    for (const auto& pt : branch.points) {
        table.row().add(pt.s).add(pt.lambda);
        if (pt.has_spectrum) {
            table.add(pt.spectrum.rightmost_real).add_int(pt.spectrum.unstable_real()).add_int(pt.spectrum.unstable_complex());
        } else {
            table.add(NAN).add("").add("");
        }
        table.add(pt.dlambda_ds);
        for (Index m = 0; m < pt.limiter_activity.size(); ++m) table.add(pt.limiter_activity[m]);
        for (std::size_t b = 0; b < ids.size(); ++b) {
            const Index at = ctx.grid.bus_state(b);
            table.add(std::hypot(pt.x[at], pt.x[at + 1]));
        }
        for (Index i = 0; i < pt.x.size(); ++i) table.add(pt.x[i]);
    }
    ctx.save(table, "branch.csv");

    Vec p = sol.p;
    const auto records = find_bifurcations(sys, p, branch);
    CsvTable bif({"kind", "lambda", "eig_re", "eig_im", "tolerance", "segment"});
    for (const auto& r : records) {
        const Complex z = r.crossing.empty() ? Complex(NAN, NAN) : r.crossing.front();
        bif.row().add(to_string(r.kind)).add(r.lambda).add(z.real()).add(std::abs(z.imag())).add(r.tolerance).add_int(
            static_cast<long long>(r.segment));
        ctx.say(std::string("  ") + to_string(r.kind) + " at " + param + " = " + format_number(r.lambda));
    }
    ctx.save(bif, "bifurcations.csv");
}

void cmd_boundary(Context& ctx) {
    const auto& sc = ctx.scenario;
    if (sc.boundary.param2.empty()) throw ConfigError("boundary2d needs analysis.boundary.param2");
    const std::vector<double> grid = ctx.options.grid ? *ctx.options.grid : sc.boundary.grid;
    const std::string param = continuation_param(ctx);
    const GridSystem& gs = ctx.grid;
    EquilibriumSolver solver = [&gs](const Vec& p, const Vec& guess) { return solve_grid_equilibrium(gs, p, guess); };
    const auto& sys = ctx.grid.dae();
    const Boundary2D b = trace_boundary_2d(sys, sys.params.values(), ctx.grid.flat_start(), param, sc.boundary.param2,
                                           grid, continuation_settings(ctx), solver);
    CsvTable table({"param2", "lambda_star", "kind", "eig_re", "eig_im", "status"});
    for (const auto& row : b.rows) {
        table.row().add(row.param2);
        if (!row.error.empty()) {
            table.add(NAN).add("none").add(NAN).add(NAN).add("error: " + row.error);
        } else if (!row.record) {
            table.add(NAN).add("none").add(NAN).add(NAN).add("no bifurcation");
        } else {
            const Complex z = row.record->crossing.empty() ? Complex(NAN, NAN) : row.record->crossing.front();
            table.add(row.record->lambda).add(to_string(row.record->kind)).add(z.real()).add(std::abs(z.imag())).add("ok");
        }
        ctx.say("  " + sc.boundary.param2 + " = " + format_number(row.param2) + ": " +
                (row.record ? std::string(to_string(row.record->kind)) + " at " + format_number(row.record->lambda)
                            : (row.error.empty() ? std::string("none") : row.error)));
    }
    ctx.save(table, "boundary.csv");
}

struct Simulation {
    Trajectory traj;
    Vec p;
};

Simulation simulate(Context& ctx) {
    const auto sol = base_equilibrium(ctx);
    const auto& sc = ctx.scenario.simulation;
    Simulation sim;
    sim.p = sol.p;
    for (const auto& [name, value] : sc.perturb) sim.p[static_cast<Index>(ctx.grid.dae().params.index(name))] = value;
    double h = sc.h;
    if (ctx.options.steps) {
        if (*ctx.options.steps < 1) throw ConfigError("--steps must be >= 1");
        h = sc.t_end / *ctx.options.steps;
    }
    sim.traj = integrate(ctx.grid.dae(), sol.x, sim.p, sc.t_end, h);
    ctx.say("simulation: " + std::to_string(sim.traj.samples()) + " samples to t = " + format_number(sc.t_end));
    return sim;
}

void save_trajectory(Context& ctx, const Simulation& sim) {
    std::vector<std::string> header{"t"};
    const auto ids = bus_ids(ctx.grid);
    for (const auto& b : ids) header.push_back(b + ".vmag");
    for (const auto& s : sim.traj.state_names) header.push_back(s);
    CsvTable table(header);
    for (Index i = 0; i < sim.traj.samples(); ++i) {
        table.row().add(sim.traj.times[i]);
        for (std::size_t b = 0; b < ids.size(); ++b) {
            const Index at = ctx.grid.bus_state(b);
            table.add(std::hypot(sim.traj.states(i, at), sim.traj.states(i, at + 1)));
        }
        for (Index j = 0; j < sim.traj.states.cols(); ++j) table.add(sim.traj.states(i, j));
    }
    ctx.save(table, "trajectory.csv");
}

void cmd_simulate(Context& ctx) { save_trajectory(ctx, simulate(ctx)); }

void cmd_secondary(Context& ctx) {
    const auto& sc = ctx.scenario.secondary;
    SecondarySettings st;
    const auto ids = bus_ids(ctx.grid);
    st.weights.w = Vec::Ones(static_cast<Index>(ids.size()));
    for (std::size_t b = 0; b < ids.size(); ++b) {
        if (auto it = sc.weights.find(ids[b]); it != sc.weights.end()) st.weights.w[static_cast<Index>(b)] = it->second;
    }
    st.weights.rho = sc.rho;
    st.alpha = sc.alpha;
    st.max_iter = ctx.options.steps ? *ctx.options.steps : sc.max_iter;
    st.tol_v = sc.tol_v;
    st.v_nom = sc.v_nom;
    const auto hist = run_recursive(ctx.grid, ctx.grid.dae().params.values(), {}, st);
    ctx.say("secondary: " + std::to_string(hist.iterations.size()) + " iterations, " + hist.stop_reason);

    CsvTable volts({"iter", "bus", "v"});
    std::vector<std::string> conv;
    for (std::size_t j = 0; j < hist.layout.names.size(); j += 2) {
        const auto& n = hist.layout.names[j];
        conv.push_back(n.substr(0, n.rfind('.')));
    }
    CsvTable gains({"iter", "converter", "g_v", "b_v", "objective", "max_deviation", "alpha"});
    for (const auto& it : hist.iterations) {
        for (std::size_t b = 0; b < it.snapshot.bus_ids.size(); ++b) {
            volts.row().add_int(it.iteration).add(it.snapshot.bus_ids[b]).add(it.snapshot.v[static_cast<Index>(b)]);
        }
        for (std::size_t c = 0; c < conv.size(); ++c) {
            gains.row()
                .add_int(it.iteration)
                .add(conv[c])
                .add(it.gains[static_cast<Index>(2 * c)])
                .add(it.gains[static_cast<Index>(2 * c + 1)])
                .add(it.objective)
                .add(it.max_deviation)
                .add(it.alpha);
        }
        ctx.say("  iter " + std::to_string(it.iteration) + ": max deviation " + format_number(it.max_deviation));
    }
    ctx.save(volts, "secondary_voltages.csv");
    ctx.save(gains, "secondary_gains.csv");
}

void cmd_cf(Context& ctx) {
    const Simulation sim = simulate(ctx);
    save_trajectory(ctx, sim);
    const auto& sc = ctx.scenario.cf;
    const double w0 = ctx.grid.model().network.omega0;
    CsvTable table({"t", "rho", "omega", "block"});
    auto emit = [&](const CfSeries& cf, const std::string& block) {
        for (Index i = 0; i < cf.t.size(); ++i) table.row().add(cf.t[i]).add(cf.rho[i]).add(cf.omega[i]).add(block);
    };
    for (const auto& bus : sc.buses) emit(cf_from_trajectory(sim.traj, bus, w0, sc.window), bus);
    for (const auto& c : sc.converters) {
        const auto dec = decompose_converter_cf(sim.traj, ctx.grid, sim.p, c, sc.window);
        emit(dec.synchronization, c + ".sync");
        emit(dec.regulation, c + ".regulation");
        emit(dec.total, c + ".total");
        bool gfl = false;
        for (const auto& u : ctx.grid.model().gfl) gfl |= u.params.id == c;
        if (gfl) emit(pll_internal_frequency(sim.traj, ctx.grid, sim.p, c), c + ".pll");
        ctx.say("  " + c + ": decomposition additivity residual " + format_number(dec.additivity_residual()));
    }
    ctx.save(table, "cf.csv");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

RunManifest run(Command command, const Scenario& scenario, std::string_view scenario_bytes, const fs::path& out_dir,
                const RunOptions& options, std::ostream* log) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);
    Context ctx{scenario, build_grid(scenario), out_dir, options, log, {}};
    switch (command) {
        case Command::equilibrium: cmd_equilibrium(ctx); break;
        case Command::continuation: cmd_continue(ctx); break;
        case Command::boundary2d: cmd_boundary(ctx); break;
        case Command::simulate: cmd_simulate(ctx); break;
        case Command::secondary: cmd_secondary(ctx); break;
        case Command::cf: cmd_cf(ctx); break;
    }

    RunManifest man;
    man.scenario_sha256 = sha256_hex(scenario_bytes);
    man.version = version();
    man.command = command_name(command);
    std::sort(ctx.written.begin(), ctx.written.end());
    for (const auto& name : ctx.written) {
        const std::string data = read_file(out_dir / name);
        man.outputs.push_back({name, sha256_hex(data), data.size()});
    }
    man.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json j;
    j["scenario_sha256"] = man.scenario_sha256;
    j["version"] = man.version;
    j["command"] = man.command;
    j["wall_time_s"] = man.wall_time_s;
    j["outputs"] = nlohmann::json::array();
    for (const auto& o : man.outputs) j["outputs"].push_back({{"file", o.name}, {"sha256", o.sha256}, {"bytes", o.bytes}});
    std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write manifest.json");
    return man;
}

}  // namespace adnlab
