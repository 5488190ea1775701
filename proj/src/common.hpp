#pragma once

#include <stdexcept>
#include <string>

namespace bdm {

// Error taxonomy shared by the core and the C API. Each maps 1:1 onto a
// bdm_status code in include/bdm/bdm.h.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidArgumentError : Error {
    using Error::Error;
};

struct OutOfRangeError : Error {
    using Error::Error;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct MissingArtifactError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bdm
