#pragma once

#include <stdexcept>
#include <string>

namespace varmdp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Induced chain has more than one recurrent class.
struct MultichainError : Error {
  using Error::Error;
};

// Induced chain is unichain but its recurrent class is periodic, so the
// limiting distribution does not exist.
struct PeriodicError : Error {
  using Error::Error;
};

// Policy iteration failed to reach a fixed point within the iteration cap.
struct NonConvergence : Error {
  using Error::Error;
};

// Outer solver exceeded its iteration cap.
struct IterationCapExceeded : Error {
  using Error::Error;
};

// Enumeration oracle would exceed its branch/policy cap.
struct CapExceeded : Error {
  using Error::Error;
};

// A remaining-goal lookup left the grid where the value is not pinned.
struct GridUnderflow : Error {
  using Error::Error;
};

// Operation requires a declared reward resolution and the instance has none.
struct MissingResolution : Error {
  using Error::Error;
};

// A state has an empty admissible action set.
struct InfeasibleState : Error {
  using Error::Error;
};

// Linear system solve hit a (numerically) zero pivot.
struct SingularMatrix : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct SchemaVersionError : Error {
  using Error::Error;
};

// A run directory is missing a file an export or certify step needs.
struct MissingArtifact : Error {
  using Error::Error;
};

}  // namespace varmdp
