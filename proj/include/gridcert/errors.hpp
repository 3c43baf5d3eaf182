#pragma once

#include <stdexcept>
#include <string>

namespace gridcert {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GRIDCERT_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

GRIDCERT_DEFINE_ERROR(InvalidInput);
GRIDCERT_DEFINE_ERROR(NoUniqueSolution);
GRIDCERT_DEFINE_ERROR(NotSemiSimple);
GRIDCERT_DEFINE_ERROR(IllConditionedTransform);
GRIDCERT_DEFINE_ERROR(Uncontrollable);
GRIDCERT_DEFINE_ERROR(Unsupported);
GRIDCERT_DEFINE_ERROR(Degenerate);
GRIDCERT_DEFINE_ERROR(ProtocolViolation);
GRIDCERT_DEFINE_ERROR(ParseError);

#undef GRIDCERT_DEFINE_ERROR

/// A decoupled subsystem could not be certified; carries the offending eigenvalue
/// real part when one is known.
class CertificateInvalid : public Error {
 public:
  explicit CertificateInvalid(const std::string& what, double offending_real_part = 0.0)
      : Error(what), offending_real_part_(offending_real_part) {}
  double offending_real_part() const noexcept { return offending_real_part_; }

 private:
  double offending_real_part_;
};

/// Integration produced a non-finite state.
class DivergedSimulation : public Error {
 public:
  DivergedSimulation(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace gridcert
