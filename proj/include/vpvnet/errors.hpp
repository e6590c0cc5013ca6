#pragma once

#include <stdexcept>
#include <string>

namespace vpvnet {

/// Arithmetic outside an operation's domain (division by zero, pow of a
/// non-positive base). Raised instead of letting NaN propagate.
class NumericDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Shape, length or reference mismatch between cooperating objects.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vpvnet
