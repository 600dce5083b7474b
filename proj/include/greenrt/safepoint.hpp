#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

namespace greenrt {

class TraceSink;

enum class WorkerMode { Idle, Active, Parked };

enum class PollResult { Continue, ParkedThenResumed, Aborted };

/// Stop-the-world handshake between mutator workers and the collector thread.
///
/// A worker is Active while it runs a green thread. The collector's
/// requestStop() raises the stop flag and returns once every worker that was
/// Active has acknowledged, either by parking at a safe point or by going
/// idle. Idle workers count as already acknowledged and cannot become Active
/// again until resumeWorld().
class SafepointController {
 public:
  explicit SafepointController(int numWorkers, TraceSink* trace = nullptr);

  // Mutator side ------------------------------------------------------------

  /// Called at every safe point. The fast path is a single flag read.
  PollResult poll(int worker) {
    if (!stopRequested_.load()) return PollResult::Continue;
    return pollSlow(worker);
  }

  /// Blocks while a stop is in progress. Returns false when aborted.
  bool enterActive(int worker);
  void leaveActive(int worker);

  /// Posts a collection request to the collector and parks until a
  /// collection has completed. Returns false when aborted.
  bool requestCollection(int worker);

  void countInstruction(int worker) { counters_[worker].instructions.fetch_add(1); }
  std::uint64_t instructions(int worker) const { return counters_[worker].instructions.load(); }

  /// Runs on the worker right after it is released, before poll returns.
  void setResumeHook(std::function<void(int)> hook) { resumeHook_ = std::move(hook); }

  // Collector side ----------------------------------------------------------

  /// Waits for a posted collection request. False on shutdown or abort.
  bool waitForCollectionRequest();
  /// Raises the stop flag and waits for every acknowledgement. Throws
  /// ProtocolError if a stop is already in progress. False on abort.
  bool requestStop();
  /// Releases parked workers. Throws ProtocolError without a pending stop.
  void resumeWorld();

  // Lifecycle ---------------------------------------------------------------

  void shutdown();
  void abort();
  bool aborted() const { return aborted_.load(); }

  // Introspection -----------------------------------------------------------

  std::uint64_t epoch() const;
  bool stopRequested() const { return stopRequested_.load(); }
  int acksNeeded() const;
  int acksReceived() const;
  WorkerMode mode(int worker) const;
  int parkedCount() const;
  int activeCount() const;
  /// Max instructions any worker ran between the last request and its ack.
  std::uint64_t lastSafepointSpan() const;
  int numWorkers() const { return static_cast<int>(modes_.size()); }

 private:
  struct alignas(64) Counter {
    std::atomic<std::uint64_t> instructions{0};
  };

  PollResult pollSlow(int worker);
  /// Acknowledge and park; lock held on entry and exit.
  PollResult parkLocked(int worker, std::unique_lock<std::mutex>& lock);
  void recordAckLocked(int worker, bool idle);

  mutable std::mutex mu_;
  std::condition_variable collectorCv_;
  std::condition_variable workerCv_;
  std::atomic<bool> stopRequested_{false};
  std::atomic<bool> aborted_{false};
  bool shutdown_ = false;
  bool pending_ = false;
  int requester_ = -1;
  std::uint64_t epoch_ = 0;
  int active_ = 0;
  int parked_ = 0;
  int acksNeeded_ = 0;
  int acksReceived_ = 0;
  std::uint64_t maxSpan_ = 0;
  std::vector<WorkerMode> modes_;
  std::vector<std::uint64_t> snapshot_;
  std::unique_ptr<Counter[]> counters_;
  std::function<void(int)> resumeHook_;
  TraceSink* trace_;
};

}  // namespace greenrt
