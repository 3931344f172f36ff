#ifndef ABCM_ERRORS_HPP
#define ABCM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace abcm {

// Shape/axis disagreement between operands.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Input geometry a model cannot process (e.g. spatial size not divisible
// by the downsampling factor).
class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or out-of-domain arguments in numeric kernels.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: a stated precondition was violated.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. `offset` is the byte position where parsing failed,
// -1 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long long offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (byte offset " + std::to_string(offset) + ")"
                                       : what),
        offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

// Optimization failure (divergence); carries the step where it happened.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what, long long step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long long step() const { return step_; }

 private:
  long long step_;
};

// A keep plan that would leave a layer with zero channels.
class DegeneratePlanError : public std::runtime_error {
 public:
  explicit DegeneratePlanError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abcm

#endif  // ABCM_ERRORS_HPP
