#pragma once

#include <stdexcept>
#include <string>

namespace profuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or inconsistent inputs supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  enum class Kind { bad_magic, unknown_dtype, payload_short, length_mismatch, bad_record, schema };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// No correspondence survived seed extraction.
class EmptySceneError : public Error {
 public:
  using Error::Error;
};

}  // namespace profuse
