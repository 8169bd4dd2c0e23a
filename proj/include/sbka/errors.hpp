#pragma once

#include <stdexcept>
#include <string>

namespace sbka {

// Exit status reported by the command-line tool for each error family.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  data = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ExitCode::config, "dimension error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::config, "config error: " + what) {}
};

/// Bad or insufficient input data, including malformed files.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, "data error: " + what) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& what) : Error(ExitCode::data, "label error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric, "numeric error: " + what) {}
};

}  // namespace sbka
