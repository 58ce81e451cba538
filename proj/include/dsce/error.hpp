#pragma once

#include <stdexcept>
#include <string>

namespace dsce {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Raised by every binary/JSON decoder. `kind` distinguishes the failure so
// callers (and tests) can tell a corrupt header from a short file.
class LoadError : public Error {
 public:
  enum class Kind { Io, BadMagic, Truncated, NonFinite, Malformed };

  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dsce
