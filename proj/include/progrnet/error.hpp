#pragma once

#include <stdexcept>
#include <string>

namespace progrnet {

// Error classes map onto CLI exit codes (see tools/progrnet.cpp).
enum class Errc {
  invalid_argument,  // bad parameters, precondition violations
  shape,             // tensor/model dimension mismatch
  format,            // malformed manifest, blob, or weights file
  io,                // filesystem failures
  network,           // connection / HTTP failures
  verification,      // checksum or accuracy failures
  state,             // invalid session/stage transitions
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace progrnet
