#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbdsde/errors.hpp"
#include "rbdsde/generators.hpp"
#include "rbdsde/rbdsde.hpp"
#include "rbdsde/regression.hpp"

namespace rbdsde {

/// One-dimensional generators given as expression strings.
struct ExpressionConfig {
    std::string f = "0";
    std::string g;  // empty: g == 0
    std::string terminal = "x";
    std::string obstacle;  // empty: no obstacle
    std::string drift = "0";
    std::string diffusion = "1";
    double x0 = 0.0;
    bool operator==(const ExpressionConfig&) const = default;
};

/// Modulus for expression problems: variant lipschitz (parameter = slope),
/// log / loglog (parameter = delta) or tabulated (two-column CSV file).
struct ModulusConfig {
    std::string variant = "lipschitz";
    double parameter = 1.0;
    double z_lipschitz = 1.0;
    double alpha = 0.5;
    std::string table_file;
    bool operator==(const ModulusConfig&) const = default;
};

struct FieldConfig {
    std::vector<std::vector<double>> x;  // space points; empty: the problem's x0
    std::vector<std::size_t> nodes;      // time node indices; empty: 0 and N
    std::vector<int> envelopes;          // envelope indices n for the bracket columns
    bool operator==(const FieldConfig&) const = default;
};

/// One flat experiment description. The horizon T, when set, overrides the
/// catalog default (catalog problems) or the default 1 (expression problems).
struct ExperimentConfig {
    std::string problem;  // catalog name, or "expression"
    std::map<std::string, double> overrides;
    std::optional<ExpressionConfig> expression;
    std::optional<ModulusConfig> modulus;

    std::optional<double> T;
    std::size_t N = 50;
    std::size_t paths = 20000;
    std::uint64_t seed = 1;
    std::uint64_t b_index = 0;

    RegressionBasis basis = RegressionBasis::polynomial(2);
    SolverConfig solver;
    double majorant_c = 1.0;
    FieldConfig field;
    std::string out_dir = ".";

    bool operator==(const ExperimentConfig&) const = default;
};

/// Malformed config text or a field of the wrong type or value. The message
/// names the line and column, or the dotted field path.
class ConfigError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Canonical JSON text (sorted keys, two-space indent, trailing newline).
std::string render_config(const ExperimentConfig& cfg);
/// Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// 64-bit FNV-1a of the rendered config with the output directory cleared,
/// so the hash identifies the experiment, not where it was written.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

/// Problem described by the config; missing name throws ConfigError,
/// unknown catalog entries CatalogError.
ProblemSpec build_problem(const ExperimentConfig& cfg);

}  // namespace rbdsde
