#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetdr {

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  MissingColumn,
  DuplicateKey,
  NonConstantCharacteristic,
  MissingObservation,
  UnitTooShort,
  EmptyPanel,
  NotIdentified,
  MaxIterExceeded,
  SingularMatrix,
  RankDeficient,
  ReducibleChain,
  NoStatesBelow,
  EmptySet,
  AllLevelsDropped,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; the code lets callers
// branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hetdr
