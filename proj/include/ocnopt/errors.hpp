#pragma once

#include <stdexcept>
#include <string>

namespace ocnopt {

/// Incompatible shapes or invalid argument values.
struct dim_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (non-convergence, indefiniteness, divergence).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct convergence_error : numeric_error {
  using numeric_error::numeric_error;
};

struct not_psd_error : numeric_error {
  using numeric_error::numeric_error;
};

struct divergence_error : numeric_error {
  using numeric_error::numeric_error;
};

/// Malformed input file (CSV, config, checkpoint); message carries location.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ocnopt
