#pragma once

#include <stdexcept>
#include <string>

namespace tim {

// Base of every error raised by the library. Each subclass carries a fixed
// prefix so CLI diagnostics stay distinguishable.
class Error : public std::runtime_error {
 public:
  Error(const std::string& prefix, const std::string& what)
      : std::runtime_error(prefix + ": " + what) {}
};

// Shape mismatches, out-of-range arguments, non-finite external input.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error("invalid input", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error", what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error("numerical error", what) {}
};

// Input is well formed but carries no usable signal (e.g. an all-zero CTR
// vector handed to the proportional allocator).
class DegenerateInput : public Error {
 public:
  explicit DegenerateInput(const std::string& what)
      : Error("degenerate input", what) {}
};

class UndefinedMetric : public Error {
 public:
  explicit UndefinedMetric(const std::string& what)
      : Error("undefined metric", what) {}
};

class MonotonicityError : public Error {
 public:
  explicit MonotonicityError(const std::string& what)
      : Error("clock regression", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io error", what) {}
};

class DatasetError : public Error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : Error("dataset error", "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kVersionMismatch, kCorrupt, kDimensionMismatch };

  CheckpointError(Kind kind, const std::string& what)
      : Error(PrefixFor(kind), what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  static std::string PrefixFor(Kind kind) {
    switch (kind) {
      case Kind::kVersionMismatch:
        return "checkpoint version mismatch";
      case Kind::kCorrupt:
        return "corrupt checkpoint";
      case Kind::kDimensionMismatch:
        return "checkpoint dimension mismatch";
    }
    return "checkpoint error";
  }
  Kind kind_;
};

}  // namespace tim
