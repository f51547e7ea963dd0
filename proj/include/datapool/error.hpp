#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace datapool {

enum class ErrorKind {
  validation,    // bad input, maps to 422
  unauthorized,  // missing/unknown credential, 401
  forbidden,     // role violation, 403
  not_found,     // 404
  conflict,      // state conflict (duplicate name, pending events), 409
  too_large,     // 413
  config,        // parameter mismatch between persisted and configured state
  storage,       // IO or log corruption; fail-stop
};

/// Exception carrying a stable machine-readable reason code.
///
/// The code is what clients match on (e.g. "no-contributions", "epoch_closed");
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string code, const std::string& message) {
  throw Error(kind, std::move(code), message);
}

}  // namespace datapool
