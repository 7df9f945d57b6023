#pragma once

#include <stdexcept>
#include <string>

namespace navdiff {

// Error taxonomy used across the library. Each maps to a CLI exit code:
// ConfigError -> 2 (usage), TransportError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension disagreements; message names the offending shapes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Caller violated an API precondition.
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value or combination.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf detected where finite values are required.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File or serialization format violation.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Backend/remote transport failure.
struct TransportError : Error {
  explicit TransportError(const std::string& msg) : Error(msg) {}
};

}  // namespace navdiff
