#include <atomic>

#include "greenrt/error.hpp"
#include "greenrt/runtime.hpp"

namespace greenrt {

namespace sl = stack_layout;

std::uint32_t Runtime::slotIndex(const WorkerRegisters& r, std::int32_t slot) const {
  return sl::kFrames + r.frameBase + sl::kFrameHeader + static_cast<std::uint32_t>(slot);
}

Word Runtime::readSlot(int worker, std::int32_t slot) {
  const WorkerRegisters& r = state_.regs(worker);
  return heap_.load(ObjectRef(r.stackBottom), slotIndex(r, slot));
}

void Runtime::writeSlot(int worker, const Function& f, std::int32_t slot, Word v) {
  const WorkerRegisters& r = state_.regs(worker);
  if (f.slotIsRef(slot)) heap_.storeRef(ObjectRef(r.stackBottom), slotIndex(r, slot), ObjectRef::fromWord(v));
  else heap_.storeRaw(ObjectRef(r.stackBottom), slotIndex(r, slot), v);
}

StepResult Runtime::switchAway(int worker, GreenThread& t, const char* kind) {
  auto l = scheduler_.lock();
  t.state = ThreadState::Ready;
  t.worker = -1;
  t.readySinceMicros = monotonicMicros();
  workers_[worker].current = nullptr;
  state_.regs(worker).hasThread = false;
  Tid next = scheduler_.switchAwayLocked(worker, t.tid, t.priority, kind);
  installLocked(worker, next);
  return StepResult::Switched;
}

// Stop-the-world poll followed by the preemption check. True when the
// thread was switched out; it resumes at the same instruction.
bool Runtime::safePoint(int worker, GreenThread& t) {
  if (controller_.poll(worker) == PollResult::Aborted) throw AbortSignal{};
  if (scheduler_.preemptCheck(worker, t.priority) == PreemptDecision::Reschedule) {
    switchAway(worker, t, event::kPreempt);
    return true;
  }
  return false;
}

StepResult Runtime::afterExit(int worker) {
  auto l = scheduler_.lock();
  if (auto next = scheduler_.pickLocked(worker)) installLocked(worker, *next);
  return StepResult::Exited;
}

StepResult Runtime::execCall(int worker, GreenThread& t, const Instruction& ins) {
  const Function& callee = program_.fn(ins.target);
  const std::uint32_t need = sl::kFrameHeader + callee.frameSize;
  growStack(worker, need);

  WorkerCtx& ctx = workers_[worker];
  ctx.inFrameConstruction.store(true);
  WorkerRegisters& r = state_.regs(worker);
  const ObjectRef stack(r.stackBottom);
  const std::uint32_t base = r.stackTop;
  const std::uint32_t at = sl::kFrames + base;
  heap_.storeRaw(stack, at + sl::kRetFn, static_cast<Word>(t.fn));
  heap_.storeRaw(stack, at + sl::kRetPc, t.pc + 1);
  heap_.storeRaw(stack, at + sl::kSize, callee.frameSize);
  heap_.storeRaw(stack, at + sl::kMask, callee.frameMask);
  for (std::uint32_t i = 0; i < callee.frameSize; ++i) {
    const std::uint32_t idx = at + sl::kFrameHeader + i;
    const auto s = static_cast<std::int32_t>(i);
    if (i < ins.args.size()) {
      const Word v = heap_.load(stack, slotIndex(r, ins.args[i]));
      if (callee.slotIsRef(s)) heap_.storeRef(stack, idx, ObjectRef::fromWord(v));
      else heap_.storeRaw(stack, idx, v);
    } else if (callee.slotIsRef(s)) {
      heap_.storeRef(stack, idx, ObjectRef::null());
    } else {
      heap_.storeRaw(stack, idx, 0);
    }
  }
  r.stackTop = base + need;
  r.frameBase = base;
  heap_.storeRaw(stack, sl::kTop, r.stackTop);
  heap_.storeRaw(stack, sl::kFrameBase, r.frameBase);
  ctx.inFrameConstruction.store(false);
  t.fn = ins.target;
  t.pc = 0;
  return StepResult::Ran;
}

StepResult Runtime::execRet(int worker, GreenThread& t, const Instruction& ins) {
  const Function& f = program_.fn(t.fn);
  WorkerRegisters& r = state_.regs(worker);
  const ObjectRef stack(r.stackBottom);
  const Word value = ins.a == kNoSlot ? 0 : readSlot(worker, ins.a);
  const std::uint32_t at = sl::kFrames + r.frameBase;
  const Word retFn = heap_.load(stack, at + sl::kRetFn);
  if (retFn == sl::kNoCaller) {
    threadExit(worker, static_cast<std::int64_t>(value));
    return afterExit(worker);
  }
  const auto callerId = static_cast<int>(retFn);
  const Function& caller = program_.fn(callerId);
  const auto retPc = static_cast<std::uint32_t>(heap_.load(stack, at + sl::kRetPc));
  const std::uint32_t callerBase = r.frameBase - (sl::kFrameHeader + caller.frameSize);
  r.stackTop = r.frameBase;
  r.frameBase = callerBase;
  heap_.storeRaw(stack, sl::kTop, r.stackTop);
  heap_.storeRaw(stack, sl::kFrameBase, r.frameBase);
  heap_.truncateStack(stack, sl::kFrames + r.stackTop);
  const Instruction& call = caller.code.at(retPc - 1);
  if (call.dst != kNoSlot && f.returns != ReturnKind::None) writeSlot(worker, caller, call.dst, value);
  t.fn = callerId;
  t.pc = retPc;
  return StepResult::Ran;
}

StepResult Runtime::execSpawn(int worker, GreenThread& t, const Instruction& ins) {
  const int prio = static_cast<int>(ins.imm);
  if (ins.imm < 0 || static_cast<std::uint64_t>(ins.imm) > cfg_.maxPrio) {
    fail(ErrorKind::Program, "SPAWN priority " + std::to_string(ins.imm) + " outside 0.." + std::to_string(cfg_.maxPrio));
  }
  const Function& f = program_.fn(ins.target);
  const std::uint32_t cap = [&] {
    std::uint64_t c = cfg_.initialStackWords;
    while (c < sl::kFrameHeader + f.frameSize) c *= 2;
    if (c > cfg_.maxStackWords) fail(ErrorKind::StackOverflow, "frame of " + f.name + " exceeds the stack limit");
    return static_cast<std::uint32_t>(c);
  }();
  {
    auto l = scheduler_.lock();
    if (live_ >= cfg_.maxThreads) {
      fail(ErrorKind::ThreadLimit, "thread limit of " + std::to_string(cfg_.maxThreads) + " reached");
    }
    ++live_;
  }
  ObjectRef stack;
  try {
    stack = allocate(worker, cap + sl::kFrames, 0, ObjectKind::Stack);
  } catch (...) {
    auto l = scheduler_.lock();
    --live_;
    throw;
  }
  // Arguments are read after the allocation, which may have moved them.
  WorkerCtx& ctx = workers_[worker];
  ctx.inFrameConstruction.store(true);
  std::vector<Value> args;
  args.reserve(ins.args.size());
  const Function& self = program_.fn(t.fn);
  for (std::int32_t s : ins.args) {
    const Word v = readSlot(worker, s);
    args.push_back(self.slotIsRef(s) ? Value::ref(ObjectRef::fromWord(v)) : Value::raw(v));
  }
  pushBottomFrame(stack, ins.target, args);
  ctx.inFrameConstruction.store(false);
  registerThread(prio, ins.target, stack, t.tid, worker);
  ++t.pc;
  return StepResult::Ran;
}

StepResult Runtime::step(int worker) {
  setCurrentWorkerId(worker);
  GreenThread* tp = workers_[worker].current;
  if (tp == nullptr) return StepResult::Idle;
  GreenThread& t = *tp;
  const Function& f = program_.fn(t.fn);
  const Instruction& ins = f.code[t.pc];
  controller_.countInstruction(worker);
  instructions_.fetch_add(1, std::memory_order_relaxed);

  if (isSafePoint(ins.op) && ins.op != Op::Yield) {
    if (safePoint(worker, t)) return StepResult::Switched;
  }

  switch (ins.op) {
    case Op::Const:
      writeSlot(worker, f, ins.dst, static_cast<Word>(ins.imm));
      break;
    case Op::Move:
      writeSlot(worker, f, ins.dst, readSlot(worker, ins.a));
      break;
    case Op::Add:
      writeSlot(worker, f, ins.dst, readSlot(worker, ins.a) + readSlot(worker, ins.b));
      break;
    case Op::Sub:
      writeSlot(worker, f, ins.dst, readSlot(worker, ins.a) - readSlot(worker, ins.b));
      break;
    case Op::Mul:
      writeSlot(worker, f, ins.dst, readSlot(worker, ins.a) * readSlot(worker, ins.b));
      break;
    case Op::Jmp:
      t.pc = static_cast<std::uint32_t>(ins.target);
      return StepResult::Ran;
    case Op::Jnz: {
      const Word v = readSlot(worker, ins.a);
      const bool taken = f.slotIsRef(ins.a) ? v != kNullWord : v != 0;
      t.pc = taken ? static_cast<std::uint32_t>(ins.target) : t.pc + 1;
      return StepResult::Ran;
    }
    case Op::Alloc: {
      const auto size = static_cast<std::uint32_t>(ins.imm);
      const ObjectKind kind = size <= kMaxPlainSlots ? ObjectKind::Plain : ObjectKind::RawData;
      ObjectRef obj = allocate(worker, size, ins.mask, kind);
      writeSlot(worker, f, ins.dst, obj.toWord());
      break;
    }
    case Op::GetField: {
      const ObjectRef obj = ObjectRef::fromWord(readSlot(worker, ins.a));
      const Value v = heap_.readField(obj, static_cast<std::uint32_t>(ins.imm));
      if (v.isRef != f.slotIsRef(ins.dst)) {
        fail(ErrorKind::Type, "GETFIELD at line " + std::to_string(ins.line) + " loads a " +
                                  (v.isRef ? "reference into a raw slot" : "raw word into a reference slot"));
      }
      writeSlot(worker, f, ins.dst, v.bits);
      break;
    }
    case Op::SetField: {
      const ObjectRef obj = ObjectRef::fromWord(readSlot(worker, ins.a));
      const Word bits = readSlot(worker, ins.b);
      heap_.writeField(obj, static_cast<std::uint32_t>(ins.imm), Value{bits, f.slotIsRef(ins.b)});
      break;
    }
    case Op::GetG:
      writeSlot(worker, f, ins.dst, state_.readGlobal(worker, static_cast<std::uint32_t>(ins.imm)));
      break;
    case Op::SetG: {
      const auto idx = static_cast<std::uint32_t>(ins.imm);
      const Word v = readSlot(worker, ins.a);
      state_.writeGlobal(worker, idx, v);
      if (shadow_ && state_.globalIsRef(idx)) {
        const ObjectRef ref = ObjectRef::fromWord(v);
        shadow_->setGlobalRoot(state_.globalsRow(worker), idx, ref.isNull() ? 0 : heap_.serialOf(ref));
      }
      break;
    }
    case Op::Call:
      return execCall(worker, t, ins);
    case Op::Ret:
      return execRet(worker, t, ins);
    case Op::Spawn:
      return execSpawn(worker, t, ins);
    case Op::Yield: {
      if (controller_.poll(worker) == PollResult::Aborted) throw AbortSignal{};
      scheduler_.preemptCheck(worker, t.priority);
      ++t.pc;
      yields_.fetch_add(1, std::memory_order_relaxed);
      if (scheduler_.maxReadyPriority() >= t.priority) return switchAway(worker, t, event::kYield);
      scheduler_.startQuantum(worker);
      return StepResult::Ran;
    }
    case Op::Safepoint:
      break;
    case Op::Exit: {
      const Word v = ins.a == kNoSlot ? 0 : readSlot(worker, ins.a);
      threadExit(worker, static_cast<std::int64_t>(v));
      return afterExit(worker);
    }
    case Op::Rand: {
      // splitmix64
      std::uint64_t z = (t.rng += 0x9E3779B97F4A7C15ull);
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      writeSlot(worker, f, ins.dst, z ^ (z >> 31));
      break;
    }
    case Op::LdConst:
      writeSlot(worker, f, ins.dst, static_cast<Word>(constants_.get(ins.key)));
      break;
  }
  ++t.pc;
  return StepResult::Ran;
}

StepResult Runtime::runSlice(int worker, std::uint64_t limit) {
  StepResult last = StepResult::Idle;
  for (std::uint64_t i = 0; i < limit; ++i) {
    last = step(worker);
    if (last != StepResult::Ran) break;
  }
  return last;
}

}  // namespace greenrt
