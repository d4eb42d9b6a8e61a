#pragma once

#include <stdexcept>
#include <string>

namespace emkat {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, bad configuration, violated preconditions. CLI exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, tables, pairs). CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// Model/schema mismatches and persistence failures. CLI exit code 3.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Training failures such as divergence. CLI exit code 3.
class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace emkat
