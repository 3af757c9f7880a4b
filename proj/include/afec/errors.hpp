#pragma once

#include <stdexcept>
#include <string>

namespace afec {

// Base for every error the library raises. Subclasses map onto the error
// categories surfaced by the CLI (config errors exit 2, the rest exit 1).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct InputError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct MetricError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Failure inside a continual-learning run, tagged with the 0-based task index.
struct RunError : Error {
  RunError(int task_index, const std::string& what)
      : Error("task " + std::to_string(task_index + 1) + ": " + what), task_index(task_index) {}
  int task_index;
};

}  // namespace afec
