#pragma once

#include <stdexcept>
#include <string>

namespace kds {

/// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or unusable input data (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A requested metric is undefined on the given inputs (CLI exit code 4).
struct MetricUndefinedError : std::runtime_error {
    explicit MetricUndefinedError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kds
