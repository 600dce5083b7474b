#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace greenrt {

enum class ErrorKind {
  Config,
  Constants,
  Parse,
  StaticCheck,
  Program,
  OutOfMemory,
  ThreadLimit,
  Field,
  Type,
  Protocol,
  StackOverflow,
  UnsupportedConstant,
  Deadlock,
  Fatal,
};

/// Process exit statuses used by the CLI.
enum ExitStatus : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitProgram = 3,
  kExitRuntime = 4,
  kExitAudit = 5,
};

std::string_view errorKindName(ErrorKind kind);
int exitStatusFor(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }
  /// Message without the "<Kind>: " prefix.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace greenrt
