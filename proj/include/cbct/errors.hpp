#pragma once

#include <stdexcept>
#include <string>

namespace cbct {

// Shape/dimension mismatches; message names the offending axis.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid parameter values (ratios, eps, dropout fraction, ...).
struct ParamError : std::runtime_error {
    explicit ParamError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

// Acquisition geometry violations (field-of-view overflow, inconsistent view sets).
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error("geometry error: " + msg) {}
};

// Broken caller contracts (non-scalar loss, missing gradients, frozen-weight drift).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

}  // namespace cbct
