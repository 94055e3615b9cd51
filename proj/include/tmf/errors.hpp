/// @file errors.hpp Exception hierarchy shared by every tmf module.

#ifndef TMF_ERRORS_HPP
#define TMF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tmf {

/// Base class for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatches, out-of-range indices, missing inputs.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A diagonal map weight is not strictly positive.
class NonMonotoneMapError : public Error {
public:
    using Error::Error;
};

/// Map estimation failed: singular covariance or solver non-convergence.
class EstimationError : public Error {
public:
    EstimationError(const std::string& what, int component, double residual = 0.0)
        : Error(what), component_(component), residual_(residual) {}

    /// 1-based index of the failing map component (0 when not tied to one).
    [[nodiscard]] int component() const noexcept { return component_; }
    /// Final gradient norm for non-convergence, 0 otherwise.
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    int component_;
    double residual_;
};

/// Non-finite values during time integration.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double time) : Error(what), time_(time) {}
    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// Observation function undefined at the given state (angle at the origin).
class ObservationError : public Error {
public:
    using Error::Error;
};

/// Failure inside one agent's assimilation step.
class AssimilationError : public Error {
public:
    using Error::Error;
};

/// Invalid scenario or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace tmf

#endif // TMF_ERRORS_HPP
