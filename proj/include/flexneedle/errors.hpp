#pragma once

#include <stdexcept>
#include <string>

namespace flexneedle {

/// Invalid configuration values or malformed scenario files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a constitutive law.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Equilibrium iteration failed; carries the last residual norm.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrackerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FeedbackError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flexneedle
