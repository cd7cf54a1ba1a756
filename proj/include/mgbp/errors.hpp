#pragma once

#include <stdexcept>
#include <string>

namespace mgbp {

// Shape/axis mismatch between tensors (message names the offending axis).
struct dimension_error : std::runtime_error {
    explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A ConvSpec or resampling request that cannot produce a valid output.
struct spec_error : std::runtime_error {
    explicit spec_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid user-facing configuration (config files, presets, plans).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Object used in a state that does not permit the operation (e.g. consumed tape).
struct state_error : std::runtime_error {
    explicit state_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated an API contract (argument counts, non-scalar outputs, ...).
struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Coordinate outside the valid extent.
struct bounds_error : std::runtime_error {
    explicit bounds_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / filesystem failures.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgbp
