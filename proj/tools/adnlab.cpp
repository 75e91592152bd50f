#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "adnlab/errors.hpp"
#include "adnlab/run.hpp"

namespace {

constexpr int kExitModel = 2;
constexpr int kExitUsage = 64;

const char* kCommands =
    "commands:\n"
    "  equilibrium  solve the operating point, write states, bus voltages and spectrum\n"
    "  continue     trace the equilibrium branch and locate bifurcations\n"
    "  boundary2d   sweep a second parameter and record the first bifurcation per row\n"
    "  simulate     integrate from equilibrium after the scenario's perturbation\n"
    "  secondary    run the recursive admittance-gain update\n"
    "  cf           simulate and write complex-frequency series\n";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stability analysis of converter-dominated distribution grids"};
    app.footer(kCommands);
    app.set_version_flag("--version", adnlab::version());

    std::string command, scenario_path, out_dir, param, grid;
    int steps = 0;
    bool quiet = false;
    app.add_option("command", command, "Analysis to run")->required();
    app.add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    app.add_option("--out", out_dir, "Output directory")->required();
    auto* param_opt = app.add_option("--param", param, "Continuation parameter (default from the scenario)");
    auto* grid_opt = app.add_option("--grid", grid, "Boundary sweep grid a:b:n");
    auto* steps_opt = app.add_option("--steps", steps, "Continuation step budget or simulation step count");
    app.add_flag("--quiet", quiet, "Suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const auto cmd = adnlab::parse_command(command);
    if (!cmd) {
        std::cerr << "unknown command '" << command << "'\n\n" << app.help();
        return kExitUsage;
    }

    adnlab::RunOptions options;
    options.quiet = quiet;
    try {
        if (*param_opt) options.param = param;
        if (*grid_opt) options.grid = adnlab::parse_grid(grid);
        if (*steps_opt) {
            if (steps < 1) throw adnlab::ConfigError("--steps must be >= 1");
            options.steps = steps;
        }
    } catch (const adnlab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        std::ifstream in(scenario_path, std::ios::binary);
        if (!in) throw adnlab::ScenarioError("cannot open scenario file " + scenario_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        const std::string bytes = buf.str();
        const adnlab::Scenario scenario = adnlab::parse_scenario(bytes, scenario_path);
        const auto manifest = adnlab::run(*cmd, scenario, bytes, out_dir, options, &std::cout);
        if (!quiet) {
            for (const auto& f : manifest.outputs) std::cout << "wrote " << f.name << " (" << f.bytes << " bytes)\n";
        }
    } catch (const adnlab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitModel;
    }
    return 0;
}
