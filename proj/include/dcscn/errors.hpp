#pragma once

#include <stdexcept>
#include <string>

namespace dcscn {

// Operand shapes that cannot be combined (kernel larger than input, mismatched masks, ...).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid scalar arguments (empty ranges, negative noise level, out-of-range indices).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values reaching a solver.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset or image does not match what a model was built for.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Image folder / PNG decoding problems. The message names the offending file.
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Network construction could not proceed.
struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem writes and model file parsing.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dcscn
