#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rbdsde/config.hpp"
#include "rbdsde/feynman_kac.hpp"
#include "rbdsde/rbdsde.hpp"

namespace rbdsde {

inline constexpr const char* kVersion = "1.0.0";

/// Exit statuses of the command-line driver.
enum ExitStatus : int {
    kExitOk = 0,
    kExitFailed = 1,          // a verification assertion failed or a run raised
    kExitParse = 2,           // malformed flags or config, unknown suite
    kExitNotConverged = 3,    // Picard cap reached; outputs are still written
    kExitUnsupported = 4,     // z-dependent g in the field pipeline
};

/// Shortest round-trip decimal form; the same bits always print the same way.
std::string format_double(double v);

/// iteration,node,t,mean_Y,mean_Z_norm,mean_K,gap,skorokhod_partial with one
/// row per node for every Picard iterate (iterations numbered from 1).
void write_solution_csv(std::ostream& out, const PicardResult& result);
/// iteration,gap
void write_gap_csv(std::ostream& out, const PicardResult& result);
/// t,x (or x1..xd),u then u_lower_n,u_upper_n for each envelope index.
void write_field_csv(std::ostream& out, const FieldSample& u, const std::vector<int>& n_values = {},
                     const std::vector<FieldSample>& lower = {}, const std::vector<FieldSample>& upper = {});

struct CheckLine {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SuiteReport {
    std::string suite;
    std::vector<CheckLine> checks;
    bool passed() const;
    /// "PASS suite/name detail" lines.
    std::string lines() const;
};

/// condition-a, envelopes, comparison, skorokhod, doss, flow. Suites run
/// fixed reference fixtures and, when the config names a problem, checks on
/// that problem as well. Throws std::invalid_argument for an unknown suite.
SuiteReport run_verify_suite(const std::string& suite, const ExperimentConfig& cfg);
const std::vector<std::string>& verify_suites();

/// Full driver: subcommands solve, field, verify, compare, condition-a.
/// Flags override RBDSDE_OUT, which overrides the config file.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rbdsde
