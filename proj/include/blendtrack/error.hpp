#pragma once

#include <stdexcept>
#include <string>

namespace blendtrack {

// Coarse failure classes. The C API maps these one-to-one onto status codes.
enum class ErrorCategory {
  InvalidArgument,
  Io,
  Parse,
  Data,
  Numeric,
};

const char* category_name(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace blendtrack
