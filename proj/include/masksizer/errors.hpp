#pragma once

#include <stdexcept>
#include <string>

namespace masksizer {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define MASKSIZER_ERROR(Name, Kind)                                  \
  class Name : public Error {                                        \
  public:                                                            \
    using Error::Error;                                              \
    const char* kind() const noexcept override { return Kind; }      \
  };

MASKSIZER_ERROR(FormatError, "format")
MASKSIZER_ERROR(GeometryError, "geometry")
MASKSIZER_ERROR(ShapeError, "shape")
MASKSIZER_ERROR(NumericError, "numeric")
MASKSIZER_ERROR(IoError, "io")
MASKSIZER_ERROR(ArgumentError, "argument")

#undef MASKSIZER_ERROR

/// Raised when a record breaks a data invariant. `field()` names the
/// offending field, `rule()` the broken rule.
class ValidationError : public Error {
public:
  ValidationError(std::string field, std::string rule, const std::string& where = {})
      : Error((where.empty() ? "" : where + ": ") + field + ": " + rule),
        field_(std::move(field)), rule_(std::move(rule)) {}
  const char* kind() const noexcept override { return "validation"; }
  const std::string& field() const noexcept { return field_; }
  const std::string& rule() const noexcept { return rule_; }

private:
  std::string field_;
  std::string rule_;
};

class TrainingError : public Error {
public:
  TrainingError(const std::string& what, int epoch, double alpha)
      : Error(what + " (epoch " + std::to_string(epoch) + ", alpha " +
              std::to_string(alpha) + ")"),
        epoch_(epoch), alpha_(alpha) {}
  const char* kind() const noexcept override { return "training"; }
  int epoch() const noexcept { return epoch_; }
  double alpha() const noexcept { return alpha_; }

private:
  int epoch_;
  double alpha_;
};

}  // namespace masksizer
