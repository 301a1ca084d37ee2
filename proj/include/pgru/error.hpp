// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace pgru {

enum class ErrorKind {
  Shape,
  Numeric,
  Domain,
  Schema,
  Parse,
  Validation,
  Alignment,
  Window,
  Degenerate,
  Contract,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Process exit status for an error class. Validation-type problems with the
/// input data share one code, and so do shape and window problems.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Same kind, message prefixed with `context: `.
  Error with_context(std::string_view context) const {
    return Error(kind_, fmt::format("{}: {}", context, what()));
  }

private:
  ErrorKind kind_;
};

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, fmt::format_string<Args...> format, Args&&... args) {
  throw Error(kind, fmt::format(format, std::forward<Args>(args)...));
}

}  // namespace pgru
