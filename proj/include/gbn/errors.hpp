#pragma once

#include <stdexcept>
#include <string>

namespace gbn {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A sampler or operation was called with parameters outside its domain.
struct ParameterError : Error {
  using Error::Error;
};

// A positive observation sits on a zero rate; the latent state cannot
// explain the data. Indicates upstream state corruption, not bad luck.
struct DegenerateRateError : Error {
  using Error::Error;
};

// Malformed input data file; message names the offending line.
struct ParseError : Error {
  using Error::Error;
};

// Unreadable or inconsistent data supplied to an operation.
struct DataError : Error {
  using Error::Error;
};

// Model file rejected: bad version tag or invariant violation on load.
struct ModelFormatError : Error {
  using Error::Error;
};

// Invalid run configuration (CLI / config file).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace gbn
