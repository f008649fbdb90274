#ifndef CSPDC_ERRORS_HPP
#define CSPDC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cspdc
{
// Input-side failures derive from std::invalid_argument; the CLI maps them to
// exit code 2. Everything else that can go wrong at run time is a
// std::runtime_error and maps to exit code 1.

/// A model or derived-quantity argument is outside its physical domain.
class ParameterError : public std::invalid_argument
{
public:
    explicit ParameterError(const std::string &what) : std::invalid_argument(what) {}
};

/// A configuration (window geometry, simulator settings, config document) is unusable.
class ConfigError : public std::invalid_argument
{
public:
    explicit ConfigError(const std::string &what) : std::invalid_argument(what) {}
};

/// Input data violates a structural invariant (e.g. unsorted time tags, bad file).
class ValidationError : public std::invalid_argument
{
public:
    explicit ValidationError(const std::string &what) : std::invalid_argument(what) {}
};

/// The fit initializer could not find a usable comb in the histogram.
class InitializationError : public std::runtime_error
{
public:
    explicit InitializationError(const std::string &what) : std::runtime_error(what) {}
};

} // namespace cspdc

#endif // CSPDC_ERRORS_HPP
