#pragma once

#include <stdexcept>
#include <string>

namespace stattn {

/// Malformed or inconsistent input data (bad CSV rows, empty station
/// intersection, artifact/checkpoint mismatch). Maps to CLI exit code 2.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure during training or evaluation (non-finite loss or
/// gradients, divergence). Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace stattn
