#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "microcurl/solver.hpp"
#include "microcurl/verify.hpp"

namespace microcurl {

// Sectioned key = value configuration:
//   [grid] [material] [variant] [load] [solver] [output]
// Unknown sections or keys, duplicates and missing required sections are
// errors; every error carries the 1-based line it refers to.
struct ConfigError {
    int line = 0;
    std::string message;
};

class ConfigParseError : public std::runtime_error {
public:
    explicit ConfigParseError(std::vector<ConfigError> errors);
    const std::vector<ConfigError>& errors() const { return errors_; }

private:
    std::vector<ConfigError> errors_;
};

struct RunConfig {
    Scenario scenario;
    SolverConfig solver;
    // bundled scenario the load section started from
    std::string kind = "custom";
    // subset of the FCC family, empty = all twelve (SC variants)
    std::vector<int> slip_subset;
    std::vector<std::string> warnings;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
// Writes every key explicitly, so parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& c);

// Bundled scenario library: shear_layer, uniaxial, elastic_patch, custom.
// Sets Gamma_D and the default load on an existing grid and material.
void apply_bundled_scenario(const std::string& kind, Scenario& sc);
bool is_bundled_scenario(const std::string& kind);

// One CSV per field: x,y,z followed by the components, rows in node order.
// Files are <field>_<step, 4 digits>.csv; returns the paths written.
std::vector<std::filesystem::path> export_fields(const Scenario& sc, const FieldState& st,
                                                 const std::filesystem::path& dir, int step);

// Deterministic report (no timing) and separate timing metadata.
std::string report_json(const RunConfig& c, const RunReport& r);
std::string run_meta_json(const RunReport& r);

enum ExitCode : int { Success = 0, ValidationFailure = 1, SolverFailure = 2, VerificationFailure = 3 };

int run_command(int argc, char** argv);

}  // namespace microcurl
