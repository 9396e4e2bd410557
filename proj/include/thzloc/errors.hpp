// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace thzloc {

// Base class; every library error derives from it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside its mathematical domain (angle ranges, non-unit vectors, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Coincident points or collinear directions where a direction is required.
class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

// Invalid configuration or inconsistent dimensions. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite derivative, failed factorization. The CLI maps this to exit code 3.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

// Singular information matrix or too few measurements.
class Unidentifiable : public NumericalFailure {
public:
    Unidentifiable(const std::string &what, std::vector<std::string> directions = {})
        : NumericalFailure(what), null_directions(std::move(directions)) {}
    std::vector<std::string> null_directions;
};

} // namespace thzloc
