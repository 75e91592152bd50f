#pragma once

#include <stdexcept>
#include <string>

namespace adnlab {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model data: broken invariants, dangling references, disconnected graphs.
class ModelError : public Error {
public:
    using Error::Error;
};

/// A voltage magnitude fell to or below the degenerate-voltage floor.
class DegenerateVoltageError : public ModelError {
public:
    DegenerateVoltageError(const std::string& where, double magnitude)
        : ModelError("degenerate voltage at " + where + " (|v| = " + std::to_string(magnitude) + ")"),
          where_(where), magnitude_(magnitude) {}

    const std::string& where() const noexcept { return where_; }
    double magnitude() const noexcept { return magnitude_; }

private:
    std::string where_;
    double magnitude_;
};

/// Inconsistent controller or analysis configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite evaluations, failed eigen-decompositions and similar.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Newton-type iteration did not reach its tolerance.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double residual, long worst_index, std::string worst_name)
        : NumericalError(what), residual_(residual), worst_index_(worst_index), worst_name_(std::move(worst_name)) {}

    double residual() const noexcept { return residual_; }
    long worst_index() const noexcept { return worst_index_; }
    const std::string& worst_name() const noexcept { return worst_name_; }

private:
    double residual_;
    long worst_index_;
    std::string worst_name_;
};

/// A Jacobian (or its algebraic block) is numerically singular.
class SingularityError : public NumericalError {
public:
    SingularityError(const std::string& what, double condition)
        : NumericalError(what), condition_(condition) {}

    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Scenario file problems: syntax, schema, references.
class ScenarioError : public Error {
public:
    using Error::Error;
};

}  // namespace adnlab
