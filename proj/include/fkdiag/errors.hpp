#pragma once

#include <stdexcept>
#include <string>

namespace fkdiag {

/// Invalid physical or experiment configuration (bad ranges, aliasing, c2 <= c1, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Vector/matrix sizes that do not agree with each other.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// File could not be read or written, or has a malformed/mismatched header.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_dim(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

inline void require_config(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail
}  // namespace fkdiag
