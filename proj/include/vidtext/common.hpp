#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace vidtext {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Error taxonomy. The CLI maps ConfigError/ValidationError to exit code 2
// and everything else to 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration value or incompatible dimensions.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent data (schema violations, dangling references).
struct ValidationError : Error {
  using Error::Error;
};

// Filesystem / serialization failures.
struct IoError : Error {
  using Error::Error;
};

// Degenerate numeric state (zero-norm embedding, NaN loss).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace vidtext
