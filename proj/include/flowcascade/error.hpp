#pragma once

#include <stdexcept>
#include <string>

namespace flowcascade {

// Base for every error this library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed capture input.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Bad configuration, bad arguments, broken contracts on caller input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Model file or model contract problems.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowcascade
