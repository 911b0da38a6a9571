#pragma once
// Sectioned key/value configuration: one file drives both the analytical
// link and the Monte Carlo controls. Flags override file values; every
// output is accompanied by a manifest in the same format that reproduces
// the run exactly when fed back as the config.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcdf/link.hpp"
#include "mcdf/sim.hpp"

namespace mcdf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ToolConfig {
    LinkConfig link;
    SimControls sim;
    std::optional<int> tau_min;  // threshold search range overrides
    std::optional<int> tau_max;

    std::pair<int, int> tau_range_or_default() const;
    void validate() const;
};

// Parses the sectioned key=value format ('#' or ';' comments). Unknown
// sections or keys raise ConfigError with the line number. The [run]
// section written into manifests is accepted and ignored.
ToolConfig load_config(const std::string& path);
ToolConfig parse_config(const std::string& text, const std::string& name);

// Serializes every resolved parameter (defaults included).
std::string render_config(const ToolConfig& config);

struct RunInfo {
    std::string tool_version;
    std::string command_line;
    std::string timestamp;
    std::vector<std::string> outputs;
};

// Config snapshot plus a [run] section; the result parses as a config.
std::string render_manifest(const ToolConfig& config, const RunInfo& info);

void write_file(const std::string& path, const std::string& content);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace mcdf
