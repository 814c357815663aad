#pragma once

#include <stdexcept>
#include <string>

namespace kneemark {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Tensor or image dimensions that do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Normalized coordinates outside [0, 1].
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  int line;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateTransform : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kManifestInvalid, kVersionMismatch, kTruncated, kNameMismatch, kShapeMismatch, kIncompatible };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace kneemark
