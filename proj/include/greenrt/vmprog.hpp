#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "greenrt/heap.hpp"

namespace greenrt {

enum class Op : std::uint8_t {
  Const,
  Move,
  Add,
  Sub,
  Mul,
  Jmp,
  Jnz,
  Alloc,
  GetField,
  SetField,
  GetG,
  SetG,
  Call,
  Ret,
  Spawn,
  Yield,
  Safepoint,
  Exit,
  Rand,
  LdConst,
};

std::string_view opName(Op op);

/// Instructions that poll for stop-the-world and preemption before executing.
constexpr bool isSafePoint(Op op) {
  switch (op) {
    case Op::Alloc:
    case Op::Yield:
    case Op::Spawn:
    case Op::Safepoint:
    case Op::Call:
    case Op::Ret:
    case Op::Exit:
      return true;
    default:
      return false;
  }
}

inline constexpr std::int32_t kNoSlot = -1;

struct Instruction {
  Op op = Op::Safepoint;
  int line = 0;
  std::int32_t dst = kNoSlot;
  std::int32_t a = kNoSlot;
  std::int32_t b = kNoSlot;
  /// CONST value, ALLOC size, field index, global index or SPAWN priority.
  std::int64_t imm = 0;
  /// ALLOC reference mask.
  Word mask = 0;
  /// Jump target (instruction index) or callee function id.
  std::int32_t target = -1;
  std::vector<std::int32_t> args;
  /// LDCONST key.
  std::string key;
};

enum class ReturnKind { None, Raw, Ref };

struct Function {
  std::string name;
  int line = 0;
  std::uint32_t frameSize = 0;
  Word frameMask = 0;
  ReturnKind returns = ReturnKind::None;
  std::vector<Instruction> code;

  bool slotIsRef(std::int32_t slot) const { return slot >= 0 && slot < 64 && ((frameMask >> slot) & 1u); }
};

inline constexpr std::uint64_t kUnboundedRun = std::numeric_limits<std::uint64_t>::max();

struct Program {
  std::vector<Function> functions;
  std::unordered_map<std::string, int> byName;
  int entry = -1;
  std::uint32_t globals = 0;
  Word globalsMask = 0;
  /// K: the most instructions a thread can execute between two safe points.
  std::uint64_t maxPollFreeRun = 0;
  bool hasPollFreeLoops = false;

  const Function& fn(int id) const { return functions.at(static_cast<std::size_t>(id)); }
  int find(const std::string& name) const {
    auto it = byName.find(name);
    return it == byName.end() ? -1 : it->second;
  }
  bool globalIsRef(std::int64_t idx) const { return idx >= 0 && idx < 64 && ((globalsMask >> idx) & 1u); }
};

struct LoadOptions {
  bool allowPollFreeLoops = false;
};

/// Parses and statically checks a program in the assembly format. Throws
/// ParseError or StaticCheckError with the offending line.
Program loadProgram(std::string_view text, const LoadOptions& opts = {});
Program loadProgramFile(const std::string& path, const LoadOptions& opts = {});

/// Longest run of consecutive non-safe-point instructions in `fn`, or
/// kUnboundedRun when a loop has no safe point.
std::uint64_t maxPollFreeRun(const Function& fn);

}  // namespace greenrt
