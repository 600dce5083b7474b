#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "greenrt/heap.hpp"
#include "greenrt/rtcfg.hpp"
#include "greenrt/scheduler.hpp"

namespace greenrt {

enum class ThreadState { Ready, Running, Blocked, Dead };

const char* threadStateName(ThreadState s);

/// A green thread. All fields are guarded by the scheduler lock except while
/// the thread is Running, when only its worker touches them.
struct GreenThread {
  Tid tid = 0;
  int priority = 0;
  ThreadState state = ThreadState::Ready;
  ObjectRef stackRef;
  int fn = -1;
  std::uint32_t pc = 0;
  int worker = -1;
  std::optional<std::int64_t> exitValue;
  std::uint64_t rng = 0;
  std::int64_t readySinceMicros = 0;
};

/// Machine registers of one worker. Everything the interpreter needs while a
/// thread is running lives here, so reaching another worker's copy is a bug.
struct WorkerRegisters {
  Tid currentThread = 0;
  bool hasThread = false;
  std::uint32_t stackBottom = 0;  // heap offset of the current stack object
  std::uint32_t stackTop = 0;
  std::uint32_t frameBase = 0;
};

std::int64_t monotonicMicros();

/// Calling OS thread's worker index; -1 outside workers.
int currentWorkerId();
void setCurrentWorkerId(int worker);
/// Set on the collector thread, which may touch every worker's state while
/// the world is stopped.
bool inCollectorContext();
void setCollectorContext(bool on);

/// Per-worker globals and registers. Each worker reads and writes only its
/// own row; accesses from anywhere else are counted as isolation violations.
class RuntimeState {
 public:
  RuntimeState(const StaticConfig& cfg, std::uint32_t globals, Word globalsMask);

  WorkerRegisters& regs(int worker) {
    audit(worker);
    return regs_[static_cast<std::size_t>(worker)];
  }

  int globalsRow(int worker) const { return isolate_ ? worker : 0; }
  Word readGlobal(int worker, std::uint32_t idx);
  void writeGlobal(int worker, std::uint32_t idx, Word v);
  /// For root enumeration during a collection.
  Word& globalSlot(int row, std::uint32_t idx) { return globals_[static_cast<std::size_t>(row) * perWorker_ + idx]; }

  int numWorkers() const { return numWorkers_; }
  int numRows() const { return isolate_ ? numWorkers_ : 1; }
  std::uint32_t globalCount() const { return count_; }
  bool globalIsRef(std::uint32_t idx) const { return idx < 64 && ((mask_ >> idx) & 1u); }
  std::uint64_t isolationViolations() const { return violations_.load(); }

 private:
  void audit(int worker) {
    if (worker != currentWorkerId() && !inCollectorContext()) violations_.fetch_add(1);
  }

  int numWorkers_;
  bool isolate_;
  std::uint32_t perWorker_;
  std::uint32_t count_;
  Word mask_;
  std::vector<WorkerRegisters> regs_;
  std::vector<Word> globals_;
  std::atomic<std::uint64_t> violations_{0};
};

}  // namespace greenrt
