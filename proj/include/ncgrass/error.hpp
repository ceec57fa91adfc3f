#pragma once

#include <stdexcept>
#include <string>

namespace ncgrass {

// Input failed a documented precondition (bad shape, out-of-range parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration document is malformed or inconsistent. The CLI maps this to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A real matrix that should carry the [[A,-B],[B,A]] layout does not.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Smallest eigenvalue of a PSD matrix fell below the near-singularity guard.
class NearSingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Codebook file could not be parsed or violates a codebook invariant.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two learned codewords became indistinguishable.
class CodebookCollapseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ncgrass
