#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cachecast {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line_no, const std::string& detail)
      : Error("malformed line " + std::to_string(line_no) + ": " + detail),
        line_no(line_no) {}
  std::size_t line_no;
};

class EmptyTrace : public Error {
 public:
  EmptyTrace() : Error("trace contains no valid records") {}
};

class HorizonTooLarge : public Error {
 public:
  HorizonTooLarge(int horizon, int num_windows)
      : Error("horizon " + std::to_string(horizon) +
              " does not fit in " + std::to_string(num_windows) + " windows") {}
};

class EmptySplit : public Error {
 public:
  explicit EmptySplit(const std::string& which)
      : Error(which + " split is empty") {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& detail)
      : Error("shape mismatch: " + detail) {}
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class EmptyVector : public Error {
 public:
  EmptyVector() : Error("empty vector") {}
};

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(const std::string& detail)
      : Error("invalid model spec: " + detail) {}
};

class HeuristicModelNotTrainable : public Error {
 public:
  HeuristicModelNotTrainable() : Error("heuristic models are not trainable") {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(int epoch)
      : Error("non-finite loss at epoch " + std::to_string(epoch)), epoch(epoch) {}
  int epoch;
};

class CorruptCheckpoint : public Error {
 public:
  explicit CorruptCheckpoint(const std::string& detail)
      : Error("corrupt checkpoint: " + detail) {}
};

class VersionMismatch : public Error {
 public:
  explicit VersionMismatch(const std::string& header)
      : Error("unsupported checkpoint version: " + header) {}
};

class ZeroCapacity : public Error {
 public:
  ZeroCapacity() : Error("cache capacity must be at least 1") {}
};

class MissingPrediction : public Error {
 public:
  MissingPrediction(std::uint64_t block_id, int window)
      : Error("no prediction for block " + std::to_string(block_id) +
              " in window " + std::to_string(window)),
        block_id(block_id),
        window(window) {}
  std::uint64_t block_id;
  int window;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cachecast
