#pragma once

#include <stdexcept>
#include <string>

namespace franson {

/// Base for all simulator failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A material model was evaluated outside its stated validity.
class RangeError : public Error {
public:
    RangeError(const std::string& what, double value, double bound)
        : Error(what), value_(value), bound_(bound) {}

    double value() const { return value_; }
    double violated_bound() const { return bound_; }

private:
    double value_;
    double bound_;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Grid too narrow, mismatched or otherwise unusable.
class GridError : public Error {
public:
    using Error::Error;
};

/// Ray left a prism face (or the geometry failed to close).
class TraceError : public Error {
public:
    TraceError(const std::string& what, int prism, double miss_mm)
        : Error(what), prism_(prism), miss_mm_(miss_mm) {}

    int prism() const { return prism_; }
    double miss_mm() const { return miss_mm_; }

private:
    int prism_;
    double miss_mm_;
};

/// Prism cannot refract at the requested geometry (n sin(apex/2) > 1).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Peak analysis could not locate a feature (edge maximum, missing crossing).
class MetricsError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace franson
