#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace citysim {

enum class ErrorCode {
  spec_infeasible,
  no_valid_pair,
  insufficient_landmarks,
  domain_error,
  empty_input,
  agent_busy,
  unknown_agent,
  unknown_op,
  message_too_long,
  oracle_blocked,
  io_error,
  schema_error,
  bad_request,
  config_error,
  bind_error,
  export_error,
};

std::string_view error_code_name(ErrorCode code);

// All engine failures surface as this exception; the code is what the wire
// protocol and the CLI report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace citysim
