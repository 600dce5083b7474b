#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "greenrt/collector.hpp"
#include "greenrt/error.hpp"
#include "greenrt/heap.hpp"
#include "greenrt/rtcfg.hpp"
#include "greenrt/safepoint.hpp"
#include "greenrt/scheduler.hpp"
#include "greenrt/shadow.hpp"
#include "greenrt/threadsys.hpp"
#include "greenrt/trace.hpp"
#include "greenrt/vmprog.hpp"

namespace greenrt {

struct RunOptions {
  StaticConfig config;
  /// Target constants for LDCONST; the host probe when empty.
  std::optional<ConstantsView> constants;
  /// Mirror the object graph and compare it after every collection.
  bool shadowAudit = false;
  /// Walk the heap after every collection.
  bool heapAudit = false;
  /// Mutation knob: skip stack frame scanning.
  bool ignoreFrameMasks = false;
};

struct ThreadResult {
  Tid tid = 0;
  int priority = 0;
  std::optional<std::int64_t> exitValue;
};

struct WaitStats {
  std::uint64_t count = 0;
  std::int64_t totalMicros = 0;
  std::int64_t maxMicros = 0;
};

struct ExitReport {
  bool ok = true;
  bool deadlock = false;
  std::optional<ErrorKind> errorKind;
  std::string errorMessage;
  int exitStatus = kExitOk;

  std::vector<ThreadResult> threads;  // by tid
  std::vector<Tid> exitOrder;
  std::vector<CollectionReport> collections;

  std::uint64_t instructions = 0;
  std::uint64_t dispatches = 0;
  std::uint64_t preemptions = 0;
  std::uint64_t yields = 0;
  std::uint64_t stackGrowths = 0;
  std::uint64_t labRefills = 0;
  std::uint64_t labRevalidations = 0;
  std::uint64_t threadsSpawned = 0;
  std::uint64_t maxLiveThreads = 0;
  std::uint64_t allocatedWords = 0;
  std::uint64_t maxPollFreeRun = 0;
  std::uint64_t wakeups = 0;

  std::uint64_t shadowViolations = 0;
  std::uint64_t heapAuditViolations = 0;
  std::vector<std::string> auditMessages;
  std::uint64_t isolationViolations = 0;

  double wallMillis = 0;
  std::map<int, WaitStats> waitByPriority;

  std::optional<std::int64_t> entryExitValue() const {
    return threads.empty() ? std::nullopt : threads.front().exitValue;
  }
};

enum class StepResult { Ran, Switched, Exited, Idle };

/// Snapshot of one frame for tests and diagnostics.
struct FrameView {
  int fn = -1;
  Word retFn = 0;
  Word retPc = 0;
  std::uint32_t base = 0;
  std::vector<Word> slots;
};

/// The runtime kernel: heap, collector, safepoint controller, scheduler,
/// green-thread table and the interpreter. run() drives a program to
/// completion on OS worker threads; the step-level API lets tests drive
/// workers by hand on the calling thread.
class Runtime {
 public:
  Runtime(const Program& program, RunOptions opts, TraceSink* trace = nullptr);
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  ExitReport run();

  // Thread system ----------------------------------------------------------

  /// Creates a thread running `fn` with `args` in its bottom frame and makes
  /// it ready. `worker` is the spawning worker, or -1 from outside.
  Tid spawn(int worker, int priority, int fn, std::span<const Value> args, Tid parent = 0);
  /// Requeues the worker's current thread and resumes `next`, which must be
  /// ready. Throws ProtocolError otherwise.
  void switchTo(int worker, Tid next);
  /// Ensures the current thread's stack has `neededWords` free, doubling
  /// the capacity. Throws StackOverflow above maxStackWords.
  void growStack(int worker, std::uint32_t neededWords);
  void threadExit(int worker, std::int64_t value);

  // Manual driving (single OS thread) ---------------------------------------

  /// Picks the next ready thread for an idle worker. False when none.
  bool dispatch(int worker);
  StepResult step(int worker);
  /// Steps until the worker's current thread exits or switches away, at
  /// most `limit` instructions.
  StepResult runSlice(int worker, std::uint64_t limit);
  /// Synchronous collection; valid only while no worker thread is running.
  CollectionReport collectNow();
  ExitReport report();

  // Introspection -----------------------------------------------------------

  Heap& heap() { return heap_; }
  Collector& collector() { return collector_; }
  Scheduler& scheduler() { return scheduler_; }
  SafepointController& controller() { return controller_; }
  RuntimeState& state() { return state_; }
  ShadowGraph* shadow() { return shadow_.get(); }
  TraceSink* trace() { return trace_; }
  const Program& program() const { return program_; }
  const StaticConfig& config() const { return cfg_; }

  GreenThread threadInfo(Tid tid);
  std::optional<Tid> currentThread(int worker);
  std::uint32_t stackCapacity(Tid tid);
  std::vector<FrameView> frames(Tid tid);
  std::uint64_t liveThreads();

 private:
  struct alignas(64) WorkerCtx {
    GreenThread* current = nullptr;
    std::atomic<bool> inFrameConstruction{false};
  };

  struct AbortSignal {};

  GreenThread& threadLocked(Tid tid);
  ObjectRef currentStack(int worker);
  void install(int worker, Tid tid);
  void installLocked(int worker, Tid tid);
  Tid registerThread(int priority, int fn, ObjectRef stack, Tid parent, int worker);
  void pushBottomFrame(ObjectRef stack, int fn, std::span<const Value> args);
  ObjectRef allocate(int worker, std::uint32_t sizeWords, Word mask, ObjectKind kind);
  void onCollectionNeeded(int worker);
  void visitRoots(Collector& c);
  CollectionReport runCollection(std::int64_t pauseStartMicros);
  void collectorMain();
  void workerMain(int worker);
  void recordFailure(const Error& e, int worker);
  void onStall();
  void copyFrames(ObjectRef from, ObjectRef to, std::uint32_t top);

  // Interpreter helpers (interpreter.cpp).
  std::uint32_t slotIndex(const WorkerRegisters& r, std::int32_t slot) const;
  Word readSlot(int worker, std::int32_t slot);
  void writeSlot(int worker, const Function& f, std::int32_t slot, Word v);
  bool safePoint(int worker, GreenThread& t);
  StepResult execCall(int worker, GreenThread& t, const Instruction& ins);
  StepResult execRet(int worker, GreenThread& t, const Instruction& ins);
  StepResult execSpawn(int worker, GreenThread& t, const Instruction& ins);
  StepResult switchAway(int worker, GreenThread& t, const char* kind);
  StepResult afterExit(int worker);

  Program program_;
  StaticConfig cfg_;
  RunOptions opts_;
  ConstantsView constants_;
  TraceSink* trace_;
  std::unique_ptr<ShadowGraph> shadow_;
  Heap heap_;
  Collector collector_;
  SafepointController controller_;
  Scheduler scheduler_;
  RuntimeState state_;
  std::unique_ptr<WorkerCtx[]> workers_;

  // Guarded by the scheduler lock.
  std::deque<GreenThread> threads_;  // index = tid - 1
  std::uint64_t live_ = 0;
  std::uint64_t maxLive_ = 0;
  std::vector<Tid> exitOrder_;
  std::map<int, WaitStats> waits_;

  std::atomic<bool> threaded_{false};
  std::atomic<bool> aborted_{false};
  std::mutex failMu_;
  std::optional<Error> failure_;
  bool deadlock_ = false;

  std::mutex statsMu_;
  std::vector<CollectionReport> collections_;
  std::uint64_t shadowViolations_ = 0;
  std::uint64_t heapAuditViolations_ = 0;
  std::vector<std::string> auditMessages_;

  std::atomic<std::uint64_t> instructions_{0};
  std::atomic<std::uint64_t> yields_{0};
  std::atomic<std::uint64_t> stackGrowths_{0};
  std::atomic<std::uint64_t> allocatedWords_{0};
  double wallMillis_ = 0;
};

/// Convenience: builds a Runtime and runs it.
ExitReport runProgram(const Program& program, const RunOptions& opts, TraceSink* trace = nullptr);

}  // namespace greenrt
