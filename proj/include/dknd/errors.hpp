#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dknd {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
public:
  using Error::Error;
};

/// Gram matrix D*D^T is numerically singular.
class RankDeficient : public Error {
public:
  RankDeficient(double smallest_eigenvalue, const std::string& what)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}
  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

private:
  double smallest_eigenvalue_;
};

class NoConvergence : public Error {
public:
  using Error::Error;
};

class SingularUpdate : public Error {
public:
  using Error::Error;
};

class StaleCache : public Error {
public:
  using Error::Error;
};

class HorizonTooShort : public Error {
public:
  using Error::Error;
};

class NonFinite : public Error {
public:
  using Error::Error;
};

class SingularV11 : public Error {
public:
  using Error::Error;
};

class TooFewSamples : public Error {
public:
  using Error::Error;
};

class EmptyDataset : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Training aborted; carries the iteration at which it happened.
class TrainingAborted : public Error {
public:
  enum class Cause { RankDeficient, NonFiniteLoss };
  TrainingAborted(Cause cause, std::size_t iteration, const std::string& what)
      : Error(what), cause_(cause), iteration_(iteration) {}
  Cause cause() const noexcept { return cause_; }
  std::size_t iteration() const noexcept { return iteration_; }

private:
  Cause cause_;
  std::size_t iteration_;
};

}  // namespace dknd
