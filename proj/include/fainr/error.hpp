#pragma once

#include <stdexcept>
#include <string>

namespace fainr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Violated precondition on an argument value.
struct ContractError : Error {
  using Error::Error;
};

// Unreadable, truncated or inconsistent file.
struct LoadError : Error {
  using Error::Error;
};

// Missing or malformed dataset content.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values, divergence.
struct NumericError : Error {
  using Error::Error;
};

#define FAINR_REQUIRE(cond, ExcType, msg) \
  do {                                    \
    if (!(cond)) throw ExcType(msg);      \
  } while (0)

}  // namespace fainr
