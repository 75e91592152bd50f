#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "adnlab/contin.hpp"
#include "adnlab/grid_system.hpp"

namespace adnlab {

struct ContinuationBlock {
    std::string param = "lambda";
    ContinuationSettings settings;
};

struct BoundaryBlock {
    std::string param2;
    std::vector<double> grid;
};

struct SimulationBlock {
    double t_end = 1.0;
    double h = 1e-3;
    /// Parameter values applied after the initial equilibrium is solved.
    std::map<std::string, double> perturb;
};

struct SecondaryBlock {
    std::map<std::string, double> weights;  ///< per bus id; missing buses weigh 1
    double rho = 0.0;
    double alpha = 0.7;
    int max_iter = 30;
    double tol_v = 0.01;
    double v_nom = 1.0;
};

struct CfBlock {
    std::vector<std::string> buses;
    std::vector<std::string> converters;
    int window = 1;
};

struct Scenario {
    std::string name;
    double frequency_hz = kNominalFrequencyHz;
    double s_mva = 1.0;
    double v_kv = 1.0;
    GridModel model;
    /// Parameter aliases: alias -> "<device id>.<field>" or "lambda".
    std::map<std::string, std::string> parameters;
    ContinuationBlock continuation;
    BoundaryBlock boundary;
    SimulationBlock simulation;
    SecondaryBlock secondary;
    CfBlock cf;
};

/// Parses and validates a scenario document. Unknown keys, syntax errors
/// (with line and column) and dangling references raise ScenarioError.
Scenario parse_scenario(const std::string& text, const std::string& origin = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

/// Fully defaulted JSON form with sorted keys; parse_scenario(canonical_json(s))
/// reproduces s.
std::string canonical_json(const Scenario& scenario);

/// Assembles the grid and registers the scenario's parameter aliases.
GridSystem build_grid(const Scenario& scenario);

}  // namespace adnlab
