#include "greenrt/error.hpp"

namespace greenrt {

std::string_view errorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Constants: return "ConstantsError";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::StaticCheck: return "StaticCheckError";
    case ErrorKind::Program: return "ProgramError";
    case ErrorKind::OutOfMemory: return "OutOfMemory";
    case ErrorKind::ThreadLimit: return "ThreadLimitError";
    case ErrorKind::Field: return "FieldError";
    case ErrorKind::Type: return "TypeError";
    case ErrorKind::Protocol: return "ProtocolError";
    case ErrorKind::StackOverflow: return "StackOverflow";
    case ErrorKind::UnsupportedConstant: return "UnsupportedConstant";
    case ErrorKind::Deadlock: return "DeadlockReport";
    case ErrorKind::Fatal: return "FatalError";
  }
  return "Error";
}

int exitStatusFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Constants:
      return kExitConfig;
    case ErrorKind::Parse:
    case ErrorKind::StaticCheck:
    case ErrorKind::Program:
      return kExitProgram;
    default:
      return kExitRuntime;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(errorKindName(kind)) + ": " + message),
      kind_(kind),
      detail_(message) {}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace greenrt
