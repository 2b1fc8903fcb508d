#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cellscript {

/// Runtime fault carrying a stable machine-readable code (e.g. "RESERVED_MUTATION").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace cellscript
