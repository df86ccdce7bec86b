#pragma once

#include <stdexcept>
#include <string>

namespace tokencast {

// Bad input, bad configuration, or a missing upstream artifact.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss and was stopped.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tokencast
