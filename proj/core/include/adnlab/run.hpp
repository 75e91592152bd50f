#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adnlab/scenario.hpp"

namespace adnlab {

const char* version();

enum class Command { equilibrium, continuation, boundary2d, simulate, secondary, cf };

std::optional<Command> parse_command(std::string_view name);
const char* command_name(Command c);

struct RunOptions {
    std::optional<std::string> param;         ///< continuation parameter override
    std::optional<std::vector<double>> grid;  ///< boundary grid override
    std::optional<int> steps;                 ///< continuation budget / simulation step count
    bool quiet = false;
};

/// "a:b:n" -> n evenly spaced values from a to b. Throws ConfigError.
std::vector<double> parse_grid(std::string_view text);

struct OutputFile {
    std::string name;
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string scenario_sha256;
    std::string version;
    std::string command;
    std::vector<OutputFile> outputs;
    double wall_time_s = 0.0;
};

std::string sha256_hex(std::string_view data);

/// Runs one command and writes its CSV files plus manifest.json into
/// `out_dir`. `scenario_bytes` is the raw scenario text used for the hash.
/// Progress lines go to `log` unless it is null.
RunManifest run(Command command, const Scenario& scenario, std::string_view scenario_bytes,
                const std::filesystem::path& out_dir, const RunOptions& options, std::ostream* log = nullptr);

}  // namespace adnlab
