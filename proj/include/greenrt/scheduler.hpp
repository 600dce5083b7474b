#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "greenrt/rtcfg.hpp"

namespace greenrt {

class TraceSink;

using Tid = std::uint32_t;

/// One FIFO per priority level; higher levels are more urgent.
class ReadyQueues {
 public:
  explicit ReadyQueues(int maxPrio);

  /// Throws ProtocolError when `tid` is already queued or `prio` is out of range.
  void push(Tid tid, int prio);
  std::optional<Tid> popHighest();
  /// Removes a specific queued thread. False when it is not queued.
  bool remove(Tid tid);
  /// -1 when every level is empty.
  int highestPriority() const;
  bool contains(Tid tid) const { return queued_.count(tid) != 0; }
  bool empty() const { return size_ == 0; }
  std::size_t size() const { return size_; }
  const std::deque<Tid>& level(int prio) const { return levels_.at(static_cast<std::size_t>(prio)); }
  int maxPrio() const { return static_cast<int>(levels_.size()) - 1; }

 private:
  std::vector<std::deque<Tid>> levels_;
  std::unordered_set<Tid> queued_;
  std::size_t size_ = 0;
};

enum class PreemptDecision { Continue, Reschedule };

/// Single global ready structure shared by all workers.
class Scheduler {
 public:
  struct Options {
    int maxPrio = 7;
    int numWorkers = 1;
    std::uint64_t quantumPolls = 100;
    QuantumMode mode = QuantumMode::Polls;
    std::uint64_t quantumMicros = 1000;
  };

  Scheduler(const Options& opts, TraceSink* trace = nullptr);

  /// The scheduler lock. The thread table shares it so that every state
  /// transition and its trace event are ordered together.
  std::unique_lock<std::mutex> lock() { return std::unique_lock<std::mutex>(mu_); }

  // Caller holds lock().
  void enqueueLocked(Tid tid, int prio);
  std::optional<Tid> pickLocked(int worker);
  /// Priority a queued thread was enqueued with.
  int queuedPriority(Tid tid) const { return queuedPrio_.at(tid); }
  /// Per-worker poll counters, read for trace snapshots.
  nlohmann::json pollSnapshot() const;

  /// Enqueues and wakes exactly one idle worker.
  void enqueue(Tid tid, int prio);
  /// Head of the highest non-empty level, or none. Emits a dispatch event.
  std::optional<Tid> pickNext(int worker);
  /// Requeues `current` at the tail of its level and picks the next thread
  /// atomically. `kind` is the trace event for the requeue (preempt/yield).
  Tid switchAway(int worker, Tid current, int prio, const char* kind);
  /// Locked variant. With `target` set, that thread is taken out of its
  /// queue and dispatched instead of the head of the highest level; throws
  /// ProtocolError when it is not ready.
  Tid switchAwayLocked(int worker, Tid current, int prio, const char* kind, std::optional<Tid> target = std::nullopt);
  /// Idle path: blocks until work arrives or shutdown. Idle workers count as
  /// acknowledged for stop-the-world (the caller leaves Active first).
  std::optional<Tid> waitForWork(int worker);
  /// Called under the lock whenever every worker is idle and nothing is ready.
  void setStallHandler(std::function<void()> handler) { stallHandler_ = std::move(handler); }
  void shutdown();
  /// Variant for callers already holding lock().
  void shutdownLocked();
  bool isShutdown() const;

  /// Invoked at each safe-point poll of a running thread.
  PreemptDecision preemptCheck(int worker, int currentPrio);
  /// Fresh budget for a newly dispatched thread. The first poll after this
  /// is not charged, so a thread always gets past the safe point it resumed at.
  void startQuantum(int worker);
  /// Lock-free read of the highest ready priority (-1 when none).
  int maxReadyPriority() const { return maxReady_.load(); }

  std::uint64_t polls(int worker) const { return workers_[worker].polls.load(); }
  std::uint64_t wakeups() const { return wakeups_.load(); }
  int idleWorkers() const;
  std::size_t readyCount() const;
  std::uint64_t dispatches() const { return dispatches_.load(); }
  std::uint64_t preemptions() const { return preemptions_.load(); }
  const Options& options() const { return opts_; }

 private:
  struct alignas(64) WorkerSlot {
    std::atomic<std::uint64_t> polls{0};
    std::uint64_t budget = 0;
    // The first poll of a quantum is the one the thread resumed at.
    bool freshQuantum = false;
    std::chrono::steady_clock::time_point sliceStart{};
  };

  void refreshMaxLocked() { maxReady_.store(queues_.highestPriority()); }

  Options opts_;
  TraceSink* trace_;
  mutable std::mutex mu_;
  std::condition_variable workCv_;
  ReadyQueues queues_;
  std::vector<int> queuedPrio_;  // indexed by tid, grows on demand
  std::atomic<int> maxReady_{-1};
  std::unique_ptr<WorkerSlot[]> workers_;
  int idle_ = 0;
  bool shutdown_ = false;
  std::function<void()> stallHandler_;
  std::atomic<std::uint64_t> wakeups_{0};
  std::atomic<std::uint64_t> dispatches_{0};
  std::atomic<std::uint64_t> preemptions_{0};
};

}  // namespace greenrt
