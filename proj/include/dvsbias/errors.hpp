#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dvsbias {

// Base for every error the library throws. Callers that only care about
// "something in the configuration or run was wrong" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class InvalidBiasError : public Error {
 public:
  using Error::Error;
};

class ModelParameterError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Syntax error in a text configuration, tagged with a 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Semantic error in a scenario directive, tagged with its index in the schedule.
class ValidationError : public Error {
 public:
  ValidationError(std::size_t directive_index, const std::string& what)
      : Error("directive " + std::to_string(directive_index) + ": " + what),
        index_(directive_index) {}
  std::size_t directive_index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Numeric fault during simulation; carries the simulated time of failure.
class SimulationFault : public Error {
 public:
  SimulationFault(double sim_time_s, const std::string& what)
      : Error("t=" + std::to_string(sim_time_s) + " s: " + what), time_(sim_time_s) {}
  double sim_time_s() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace dvsbias
