#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbdsde {

// Argument validation failures use std::invalid_argument directly. The types
// below carry domain failures that callers are expected to distinguish.

/// Least-squares system could not be solved (rank deficient with zero ridge).
class SingularRegressionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A generator returned a non-finite value during the backward sweep.
class GeneratorEvaluationError : public std::runtime_error {
public:
    GeneratorEvaluationError(const std::string& what, std::size_t node)
        : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// An iterative construction exceeded its iteration cap without terminating.
class NonTerminationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Envelope evaluated outside the finite grid standing in for the rationals.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Unknown catalog entry.
class CatalogError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Experiment preconditions (e.g. ordering of two problems) do not hold.
class SetupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problem outside the supported class, e.g. a z-dependent g in the field pipeline.
class UnsupportedProblemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The Doss flow lost monotonicity in y; the time step is too coarse.
class StepSizeError : public std::runtime_error {
public:
    StepSizeError(const std::string& what, std::size_t node)
        : std::runtime_error(what + " (time node " + std::to_string(node) + ")"), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// Malformed configuration or expression text.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rbdsde
