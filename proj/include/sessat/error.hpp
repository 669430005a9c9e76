#pragma once

#include <stdexcept>
#include <string>

namespace sessat {

// Every failure surfaced by the library carries a module-prefixed code such as
// "session.MalformedRecord" or "model.NotFound". The CLI prints the code in its
// machine-readable error report.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace sessat
