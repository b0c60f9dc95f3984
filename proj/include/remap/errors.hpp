#pragma once

#include <stdexcept>
#include <string>

namespace remap {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File and stream problems: missing paths, malformed records, bad headers.
struct IoError : Error {
  using Error::Error;
};

// Bad configuration or mismatched artifacts (hash mismatch, wrong dims,
// unknown link names, ranges outside limits).
struct ConfigError : Error {
  using Error::Error;
};

// Mathematically invalid input to a numeric routine (corrupted rotation
// matrix, degenerate 6D vector, dimension mismatch).
struct DomainError : Error {
  using Error::Error;
};

// Numeric failure at run time: non-finite loss, diverged optimization.
struct NumericError : Error {
  using Error::Error;
};

// URDF parsing failures, one kind per distinct defect.
struct UrdfError : Error {
  enum class Kind {
    MalformedXml,
    UnsupportedJoint,
    MissingLimit,
    DanglingLink,
    CyclicGraph,
    BadAttribute,
    NoRoot,
  };
  UrdfError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
  Kind kind;
};

}  // namespace remap
