#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "adnlab/grid_system.hpp"
#include "adnlab/scenario.hpp"

namespace testing_support {

inline std::filesystem::path scenario_path(const std::string& name) {
    return std::filesystem::path(ADNLAB_SCENARIO_DIR) / name;
}

inline adnlab::Scenario scenario(const std::string& name) { return adnlab::load_scenario(scenario_path(name)); }

/// Upper root of v^4 - v^2 + (P X)^2 = 0 for a lossless line fed at 1 pu.
inline double two_bus_voltage(double p, double x) {
    return std::sqrt(0.5 * (1.0 + std::sqrt(1.0 - 4.0 * p * p * x * x)));
}

/// Source B1 (1 pu), line x, constant-power unity-pf load p0 at B2.
inline adnlab::GridModel two_bus_model(double p0, double x, double t_load = 0.1,
                                       adnlab::NetworkMode mode = adnlab::NetworkMode::algebraic) {
    adnlab::GridModel m;
    m.network.mode = mode;
    m.network.buses = {{"B1", 1e-9}, {"B2", 1e-9}};
    m.network.branches = {{"L12", "B1", "B2", 0.0, x}};
    adnlab::GridSource g;
    g.id = "G1";
    g.bus = "B1";
    m.network.sources = {g};
    adnlab::ZipLoad l;
    l.id = "D2";
    l.bus = "B2";
    l.p0 = p0;
    l.t_load = t_load;
    m.network.zip_loads = {l};
    m.validate();
    return m;
}

inline double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace testing_support
