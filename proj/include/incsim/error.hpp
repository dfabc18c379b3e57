#pragma once

#include <stdexcept>
#include <string>

namespace incsim {

/// Invalid configuration or model parameters (CLI exit code 2).
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file or data (CLI exit code 2).
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// No parameter set satisfies the requested targets.
class FitError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Simulation state violated one of its conservation rules.
class InvariantError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace incsim
