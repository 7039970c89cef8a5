#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ironwan/netsim/netsim.hpp"

namespace ironwan::cli {

/// Bad scenario file or flag value (exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A load axis value: the named levels map to 10/50/90% ack-requiring nodes.
struct LoadValue {
    std::string label;
    double fraction = 0.5;
};
LoadValue parse_load(const std::string& text);

/// Axes left empty take the single base value.
struct SweepSpec {
    std::vector<std::size_t> gateways;
    std::vector<LoadValue> loads;
    std::vector<netsim::SystemKind> systems;
    std::vector<int> retx_limits;
    std::vector<std::size_t> networks;
    std::vector<std::uint64_t> seeds;
};

struct ScenarioFile {
    std::string name = "scenario";
    netsim::ScenarioConfig base;
    LoadValue base_load{"medium", 0.5};
    SweepSpec sweep;
};

/// Throws ConfigError naming the offending key path.
ScenarioFile parse_scenario(const std::string& yaml_text);
ScenarioFile load_scenario(const std::string& path);

/// One sweep cell at one seed.
struct Cell {
    std::string id;  // identifies the cell across seeds
    std::string load_label;
    netsim::ScenarioConfig config;
};

/// Cartesian product in a fixed order: system, gateways, networks, load,
/// retx_limit, then seed innermost.
std::vector<Cell> expand(const ScenarioFile& file);

}  // namespace ironwan::cli
