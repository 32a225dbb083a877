#pragma once

#include <stdexcept>
#include <string>

namespace spup {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something the contract forbids (bad factor, empty input, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input data is unusable: unreadable files, malformed annotations, bad models.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ModelFormatError : public DataError {
 public:
  using DataError::DataError;
};

class BadMagicError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class UnsupportedVersionError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class ChecksumError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class InvariantError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

}  // namespace spup
