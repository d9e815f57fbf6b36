#pragma once

#include <stdexcept>
#include <string>

namespace chronoalign {

// Exception types map onto the CLI exit codes: ConfigError -> 2, IoError -> 3,
// NumericError -> 4. Everything else raised from the library is a plain
// std::invalid_argument (precondition violation) and is treated as a config
// error by the CLI as well.

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class UnsupportedFormatError : public IoError {
 public:
  explicit UnsupportedFormatError(const std::string& what) : IoError(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chronoalign
