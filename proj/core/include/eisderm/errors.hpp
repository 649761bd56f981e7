#pragma once

#include <stdexcept>
#include <string>

namespace eisderm {

// Shape or dimension incompatibility between tensors / configs.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf showed up where only finite values are allowed.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition violated by the caller (empty sequence, missing grad, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// A lesion appeared in both the train and eval side of a fold split.
struct LeakageError : std::runtime_error {
  explicit LeakageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace eisderm
