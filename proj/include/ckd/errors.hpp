#pragma once

#include <stdexcept>
#include <string>

namespace ckd {

/// Base of every library error. `kind()` is a stable, machine-parseable
/// class name ("InvalidInput", "BudgetExhausted", ...) that the CLI prints
/// on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CKD_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(#Name, message) {}    \
  }

CKD_DEFINE_ERROR(InvalidInput);
CKD_DEFINE_ERROR(BudgetExhausted);
CKD_DEFINE_ERROR(CacheCorrupt);
CKD_DEFINE_ERROR(HintUnavailable);
CKD_DEFINE_ERROR(TeacherMismatch);
CKD_DEFINE_ERROR(TooLarge);
CKD_DEFINE_ERROR(NumericalDivergence);
CKD_DEFINE_ERROR(IoError);

#undef CKD_DEFINE_ERROR

}  // namespace ckd
