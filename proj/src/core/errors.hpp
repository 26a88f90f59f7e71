#pragma once

#include <stdexcept>
#include <string>

namespace sblab {

// Error taxonomy shared by the whole library. Each category maps 1:1 onto a
// status code in the public C header, so keep the two lists in sync.
enum class ErrorCode {
  invalid_argument,  // bad parameter value or malformed input
  io,                // filesystem read/write failure
  format,            // unparseable or version-mismatched file
  schema,            // structurally valid file violating the schema
  capacity,          // requested more than the data can provide
  trigger,           // trigger generator / adapter failure
  timeout,           // external adapter exceeded its deadline
  state,             // operation called with missing upstream artifact
  diverged,          // training produced a non-finite loss
  contract,          // caller violated a documented precondition
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::schema: return "schema";
    case ErrorCode::capacity: return "capacity";
    case ErrorCode::trigger: return "trigger";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::state: return "state";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::contract: return "contract";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace sblab
