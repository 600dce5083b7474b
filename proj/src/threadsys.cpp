#include "greenrt/threadsys.hpp"

#include <atomic>
#include <chrono>

#include "greenrt/error.hpp"
#include "greenrt/runtime.hpp"

namespace greenrt {

namespace {
thread_local int tlsWorker = -1;
thread_local bool tlsCollector = false;
}  // namespace

std::int64_t monotonicMicros() {
  static const auto origin = std::chrono::steady_clock::now();
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - origin).count();
}

int currentWorkerId() { return tlsWorker; }
void setCurrentWorkerId(int worker) { tlsWorker = worker; }
bool inCollectorContext() { return tlsCollector; }
void setCollectorContext(bool on) { tlsCollector = on; }

const char* threadStateName(ThreadState s) {
  switch (s) {
    case ThreadState::Ready: return "ready";
    case ThreadState::Running: return "running";
    case ThreadState::Blocked: return "blocked";
    case ThreadState::Dead: return "dead";
  }
  return "?";
}

RuntimeState::RuntimeState(const StaticConfig& cfg, std::uint32_t globals, Word globalsMask)
    : numWorkers_(static_cast<int>(cfg.numWorkers)),
      isolate_(cfg.isolateGlobals),
      perWorker_(static_cast<std::uint32_t>(cfg.globalsPerWorker)),
      count_(globals),
      mask_(globalsMask),
      regs_(static_cast<std::size_t>(cfg.numWorkers)) {
  if (globals > perWorker_) {
    fail(ErrorKind::Program, "program declares " + std::to_string(globals) + " globals but workers have " +
                                 std::to_string(perWorker_));
  }
  globals_.assign(static_cast<std::size_t>(numRows()) * perWorker_, 0);
  for (int row = 0; row < numRows(); ++row) {
    for (std::uint32_t i = 0; i < count_; ++i) {
      if (globalIsRef(i)) globalSlot(row, i) = kNullWord;
    }
  }
}

Word RuntimeState::readGlobal(int worker, std::uint32_t idx) {
  audit(worker);
  return std::atomic_ref<Word>(globalSlot(globalsRow(worker), idx)).load(std::memory_order_relaxed);
}

void RuntimeState::writeGlobal(int worker, std::uint32_t idx, Word v) {
  audit(worker);
  std::atomic_ref<Word>(globalSlot(globalsRow(worker), idx)).store(v, std::memory_order_relaxed);
}

// Runtime: thread system ------------------------------------------------------

namespace sl = stack_layout;

GreenThread& Runtime::threadLocked(Tid tid) {
  if (tid == 0 || tid > threads_.size()) fail(ErrorKind::Protocol, "unknown thread " + std::to_string(tid));
  return threads_[tid - 1];
}

ObjectRef Runtime::currentStack(int worker) { return ObjectRef(state_.regs(worker).stackBottom); }

ObjectRef Runtime::allocate(int worker, std::uint32_t sizeWords, Word mask, ObjectKind kind) {
  ObjectRef r = heap_.alloc(worker < 0 ? 0 : worker, sizeWords, mask, kind);
  allocatedWords_.fetch_add(sizeWords + 1, std::memory_order_relaxed);
  return r;
}

void Runtime::pushBottomFrame(ObjectRef stack, int fn, std::span<const Value> args) {
  const Function& f = program_.fn(fn);
  heap_.storeRaw(stack, sl::kTop, sl::kFrameHeader + f.frameSize);
  heap_.storeRaw(stack, sl::kFrameBase, 0);
  const std::uint32_t base = sl::kFrames;
  heap_.storeRaw(stack, base + sl::kRetFn, sl::kNoCaller);
  heap_.storeRaw(stack, base + sl::kRetPc, 0);
  heap_.storeRaw(stack, base + sl::kSize, f.frameSize);
  heap_.storeRaw(stack, base + sl::kMask, f.frameMask);
  for (std::uint32_t i = 0; i < f.frameSize; ++i) {
    const std::uint32_t idx = base + sl::kFrameHeader + i;
    if (f.slotIsRef(static_cast<std::int32_t>(i))) {
      ObjectRef v = i < args.size() ? args[i].asRef() : ObjectRef::null();
      heap_.storeRef(stack, idx, v);
    } else {
      heap_.storeRaw(stack, idx, i < args.size() ? args[i].bits : 0);
    }
  }
}

Tid Runtime::registerThread(int priority, int fn, ObjectRef stack, Tid parent, int worker) {
  auto l = scheduler_.lock();
  const Tid tid = static_cast<Tid>(threads_.size() + 1);
  GreenThread t;
  t.tid = tid;
  t.priority = priority;
  t.state = ThreadState::Ready;
  t.stackRef = stack;
  t.fn = fn;
  t.rng = cfg_.seed ^ (0x9E3779B97F4A7C15ull * tid);
  t.readySinceMicros = monotonicMicros();
  threads_.push_back(t);
  maxLive_ = std::max(maxLive_, live_);
  if (shadow_) shadow_->setThreadRoot(tid, heap_.serialOf(stack));
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kSpawn,
                 {{"tid", tid},
                  {"prio", priority},
                  {"parent", parent},
                  {"fn", program_.fn(fn).name},
                  {"live", live_},
                  {"snapshot", scheduler_.pollSnapshot()}});
  }
  scheduler_.enqueueLocked(tid, priority);
  return tid;
}

namespace {
std::uint32_t initialCapacity(const StaticConfig& cfg, const Function& f) {
  std::uint64_t cap = cfg.initialStackWords;
  while (cap < sl::kFrameHeader + f.frameSize) cap *= 2;
  if (cap > cfg.maxStackWords) {
    fail(ErrorKind::StackOverflow, "function " + f.name + " needs a " + std::to_string(sl::kFrameHeader + f.frameSize) +
                                       "-word frame, stack limit is " + std::to_string(cfg.maxStackWords));
  }
  return static_cast<std::uint32_t>(cap);
}
}  // namespace

Tid Runtime::spawn(int worker, int priority, int fn, std::span<const Value> args, Tid parent) {
  if (priority < 0 || static_cast<std::uint64_t>(priority) > cfg_.maxPrio) {
    fail(ErrorKind::Program, "priority " + std::to_string(priority) + " outside 0.." + std::to_string(cfg_.maxPrio));
  }
  if (fn < 0 || static_cast<std::size_t>(fn) >= program_.functions.size()) {
    fail(ErrorKind::Program, "unknown function id " + std::to_string(fn));
  }
  const Function& f = program_.fn(fn);
  if (args.size() > f.frameSize) fail(ErrorKind::Program, "too many arguments for " + f.name);
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i].isRef != f.slotIsRef(static_cast<std::int32_t>(i))) {
      fail(ErrorKind::Type, "argument " + std::to_string(i) + " of " + f.name + " has the wrong kind");
    }
    // A reference held outside the heap would not be updated by a collection.
    if (args[i].isRef && !args[i].asRef().isNull()) {
      fail(ErrorKind::Program, "reference arguments can only be passed by a running thread");
    }
  }
  const std::uint32_t cap = initialCapacity(cfg_, f);
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
  pushBottomFrame(stack, fn, args);
  return registerThread(priority, fn, stack, parent, worker);
}

void Runtime::installLocked(int worker, Tid tid) {
  GreenThread& t = threadLocked(tid);
  t.state = ThreadState::Running;
  t.worker = worker;
  const std::int64_t waited = monotonicMicros() - t.readySinceMicros;
  auto& w = waits_[t.priority];
  ++w.count;
  w.totalMicros += waited;
  w.maxMicros = std::max(w.maxMicros, waited);
  WorkerRegisters& r = state_.regs(worker);
  r.currentThread = tid;
  r.hasThread = true;
  r.stackBottom = t.stackRef.offset();
  r.stackTop = static_cast<std::uint32_t>(heap_.load(t.stackRef, sl::kTop));
  r.frameBase = static_cast<std::uint32_t>(heap_.load(t.stackRef, sl::kFrameBase));
  workers_[worker].current = &t;
  scheduler_.startQuantum(worker);
}

void Runtime::install(int worker, Tid tid) {
  auto l = scheduler_.lock();
  installLocked(worker, tid);
}

bool Runtime::dispatch(int worker) {
  if (workers_[worker].current != nullptr) fail(ErrorKind::Protocol, "worker already runs a thread");
  auto l = scheduler_.lock();
  auto tid = scheduler_.pickLocked(worker);
  if (!tid) return false;
  installLocked(worker, *tid);
  return true;
}

void Runtime::switchTo(int worker, Tid next) {
  GreenThread* cur = workers_[worker].current;
  if (cur == nullptr) fail(ErrorKind::Protocol, "worker " + std::to_string(worker) + " has no current thread");
  auto l = scheduler_.lock();
  GreenThread& n = threadLocked(next);
  if (n.state != ThreadState::Ready) {
    fail(ErrorKind::Protocol, "cannot switch to thread " + std::to_string(next) + ": it is " + threadStateName(n.state));
  }
  cur->state = ThreadState::Ready;
  cur->worker = -1;
  cur->readySinceMicros = monotonicMicros();
  workers_[worker].current = nullptr;
  state_.regs(worker).hasThread = false;
  Tid picked = scheduler_.switchAwayLocked(worker, cur->tid, cur->priority, event::kYield, next);
  yields_.fetch_add(1, std::memory_order_relaxed);
  installLocked(worker, picked);
}

void Runtime::copyFrames(ObjectRef from, ObjectRef to, std::uint32_t top) {
  heap_.storeRaw(to, sl::kTop, top);
  heap_.storeRaw(to, sl::kFrameBase, heap_.load(from, sl::kFrameBase));
  std::uint32_t base = 0;
  while (base < top) {
    const std::uint32_t at = sl::kFrames + base;
    for (std::uint32_t i = 0; i < sl::kFrameHeader; ++i) heap_.storeRaw(to, at + i, heap_.load(from, at + i));
    const auto size = static_cast<std::uint32_t>(heap_.load(from, at + sl::kSize));
    const Word mask = heap_.load(from, at + sl::kMask);
    for (std::uint32_t i = 0; i < size; ++i) {
      const std::uint32_t idx = at + sl::kFrameHeader + i;
      const Word v = heap_.load(from, idx);
      if (i < 64 && ((mask >> i) & 1u)) heap_.storeRef(to, idx, ObjectRef::fromWord(v));
      else heap_.storeRaw(to, idx, v);
    }
    base += sl::kFrameHeader + size;
  }
}

void Runtime::growStack(int worker, std::uint32_t neededWords) {
  GreenThread* t = workers_[worker].current;
  if (t == nullptr) fail(ErrorKind::Protocol, "worker " + std::to_string(worker) + " has no current thread");
  WorkerRegisters& r = state_.regs(worker);
  const std::uint32_t oldCap = heap_.header(currentStack(worker)).sizeWords - sl::kFrames;
  const std::uint32_t top = r.stackTop;
  if (oldCap - top >= neededWords) return;
  std::uint64_t newCap = oldCap;
  while (newCap - top < neededWords) newCap *= 2;
  if (newCap > cfg_.maxStackWords) {
    fail(ErrorKind::StackOverflow, "thread " + std::to_string(t->tid) + " needs " + std::to_string(top + neededWords) +
                                       " stack words, limit is " + std::to_string(cfg_.maxStackWords));
  }
  ObjectRef fresh = allocate(worker, static_cast<std::uint32_t>(newCap) + sl::kFrames, 0, ObjectKind::Stack);
  // The allocation may have collected; the registers hold the moved stack.
  copyFrames(currentStack(worker), fresh, top);
  {
    auto l = scheduler_.lock();
    t->stackRef = fresh;
    r.stackBottom = fresh.offset();
    if (shadow_) shadow_->setThreadRoot(t->tid, heap_.serialOf(fresh));
    if (trace_ != nullptr) {
      trace_->emit(worker, event::kStackGrow, {{"tid", t->tid}, {"from", oldCap}, {"to", newCap}, {"top", top}});
    }
  }
  stackGrowths_.fetch_add(1, std::memory_order_relaxed);
}

void Runtime::threadExit(int worker, std::int64_t value) {
  GreenThread* t = workers_[worker].current;
  if (t == nullptr) fail(ErrorKind::Protocol, "worker " + std::to_string(worker) + " has no current thread");
  auto l = scheduler_.lock();
  t->state = ThreadState::Dead;
  t->exitValue = value;
  t->stackRef = ObjectRef::null();
  t->worker = -1;
  --live_;
  exitOrder_.push_back(t->tid);
  if (shadow_) shadow_->clearThreadRoot(t->tid);
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kExit,
                 {{"tid", t->tid}, {"value", value}, {"live", live_}, {"polls", scheduler_.polls(worker)}});
  }
  workers_[worker].current = nullptr;
  state_.regs(worker).hasThread = false;
  if (live_ == 0) scheduler_.shutdownLocked();
}

GreenThread Runtime::threadInfo(Tid tid) {
  auto l = scheduler_.lock();
  return threadLocked(tid);
}

std::optional<Tid> Runtime::currentThread(int worker) {
  GreenThread* t = workers_[worker].current;
  if (t == nullptr) return std::nullopt;
  return t->tid;
}

std::uint32_t Runtime::stackCapacity(Tid tid) {
  GreenThread t = threadInfo(tid);
  if (t.stackRef.isNull()) return 0;
  return heap_.header(t.stackRef).sizeWords - sl::kFrames;
}

std::vector<FrameView> Runtime::frames(Tid tid) {
  GreenThread t = threadInfo(tid);
  std::vector<FrameView> out;
  if (t.stackRef.isNull()) return out;
  const auto top = static_cast<std::uint32_t>(heap_.load(t.stackRef, sl::kTop));
  std::uint32_t base = 0;
  std::vector<std::uint32_t> bases;
  while (base < top) {
    FrameView v;
    const std::uint32_t at = sl::kFrames + base;
    v.base = base;
    v.retFn = heap_.load(t.stackRef, at + sl::kRetFn);
    v.retPc = heap_.load(t.stackRef, at + sl::kRetPc);
    const auto size = static_cast<std::uint32_t>(heap_.load(t.stackRef, at + sl::kSize));
    for (std::uint32_t i = 0; i < size; ++i) v.slots.push_back(heap_.load(t.stackRef, at + sl::kFrameHeader + i));
    out.push_back(std::move(v));
    base += sl::kFrameHeader + size;
  }
  // Frame i runs the function its successor returns into; the top frame runs t.fn.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].fn = i + 1 < out.size() ? static_cast<int>(out[i + 1].retFn) : t.fn;
  }
  return out;
}

std::uint64_t Runtime::liveThreads() {
  auto l = scheduler_.lock();
  return live_;
}

}  // namespace greenrt
