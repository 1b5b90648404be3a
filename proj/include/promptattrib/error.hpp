#pragma once

#include <stdexcept>
#include <string>

namespace promptattrib {

// Runtime failure: bad data, failed precondition on values, divergence.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or command-line usage. The CLI maps this to exit status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace promptattrib
