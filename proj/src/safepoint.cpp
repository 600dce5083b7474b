#include "greenrt/safepoint.hpp"

#include <algorithm>

#include "greenrt/error.hpp"
#include "greenrt/trace.hpp"

namespace greenrt {

SafepointController::SafepointController(int numWorkers, TraceSink* trace)
    : modes_(static_cast<std::size_t>(numWorkers), WorkerMode::Idle),
      snapshot_(static_cast<std::size_t>(numWorkers), 0),
      counters_(std::make_unique<Counter[]>(static_cast<std::size_t>(numWorkers))),
      trace_(trace) {}

PollResult SafepointController::pollSlow(int worker) {
  std::unique_lock<std::mutex> lock(mu_);
  if (aborted_) return PollResult::Aborted;
  if (!stopRequested_ || modes_[worker] != WorkerMode::Active) return PollResult::Continue;
  PollResult r = parkLocked(worker, lock);
  lock.unlock();
  if (r == PollResult::ParkedThenResumed && resumeHook_) resumeHook_(worker);
  return r;
}

void SafepointController::recordAckLocked(int worker, bool idle) {
  ++acksReceived_;
  std::uint64_t now = counters_[worker].instructions.load();
  std::uint64_t span = now - snapshot_[worker];
  maxSpan_ = std::max(maxSpan_, span);
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kGcAck, {{"instr", now}, {"span", span}, {"idle", idle}, {"epoch", epoch_}});
  }
}

PollResult SafepointController::parkLocked(int worker, std::unique_lock<std::mutex>& lock) {
  for (;;) {
    const std::uint64_t epoch = epoch_;
    modes_[worker] = WorkerMode::Parked;
    --active_;
    ++parked_;
    recordAckLocked(worker, false);
    if (trace_ != nullptr) trace_->emit(worker, event::kGcPark, {{"epoch", epoch}});
    collectorCv_.notify_all();
    workerCv_.wait(lock, [&] { return epoch_ != epoch || aborted_; });
    if (aborted_) return PollResult::Aborted;
    // resumeWorld made this worker active again. If another stop began
    // before it got the CPU, that stop is waiting for it too.
    if (!stopRequested_) return PollResult::ParkedThenResumed;
  }
}

bool SafepointController::enterActive(int worker) {
  std::unique_lock<std::mutex> lock(mu_);
  workerCv_.wait(lock, [&] { return !stopRequested_ || aborted_; });
  if (aborted_) return false;
  if (modes_[worker] == WorkerMode::Idle) {
    modes_[worker] = WorkerMode::Active;
    ++active_;
  }
  return true;
}

void SafepointController::leaveActive(int worker) {
  std::lock_guard<std::mutex> lock(mu_);
  if (modes_[worker] != WorkerMode::Active) return;
  modes_[worker] = WorkerMode::Idle;
  --active_;
  if (stopRequested_) recordAckLocked(worker, true);
  collectorCv_.notify_all();
}

bool SafepointController::requestCollection(int worker) {
  std::unique_lock<std::mutex> lock(mu_);
  if (aborted_) return false;
  if (modes_[worker] != WorkerMode::Active) fail(ErrorKind::Protocol, "collection requested by an inactive worker");
  const std::uint64_t epoch = epoch_;
  if (!stopRequested_) {
    pending_ = true;
    requester_ = worker;
    collectorCv_.notify_all();
  }
  workerCv_.wait(lock, [&] { return stopRequested_ || epoch_ != epoch || aborted_; });
  if (aborted_) return false;
  if (epoch_ != epoch) return true;
  PollResult r = parkLocked(worker, lock);
  lock.unlock();
  if (r == PollResult::Aborted) return false;
  if (resumeHook_) resumeHook_(worker);
  return true;
}

bool SafepointController::waitForCollectionRequest() {
  std::unique_lock<std::mutex> lock(mu_);
  collectorCv_.wait(lock, [&] { return pending_ || shutdown_ || aborted_; });
  if (aborted_ || !pending_) return false;
  pending_ = false;
  return true;
}

bool SafepointController::requestStop() {
  std::unique_lock<std::mutex> lock(mu_);
  if (stopRequested_) fail(ErrorKind::Protocol, "stop already requested");
  if (aborted_) return false;
  stopRequested_.store(true);
  nlohmann::json instr = nlohmann::json::array();
  for (std::size_t w = 0; w < modes_.size(); ++w) {
    snapshot_[w] = counters_[w].instructions.load();
    instr.push_back(snapshot_[w]);
  }
  acksNeeded_ = active_;
  acksReceived_ = 0;
  maxSpan_ = 0;
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kGcRequest,
                 {{"needed", acksNeeded_}, {"requester", requester_}, {"instr", instr}, {"epoch", epoch_}});
  }
  requester_ = -1;
  workerCv_.notify_all();
  collectorCv_.wait(lock, [&] { return active_ == 0 || aborted_; });
  if (aborted_) return false;
  if (acksReceived_ != acksNeeded_) {
    fail(ErrorKind::Fatal, "stop acknowledged by " + std::to_string(acksReceived_) + " of " +
                               std::to_string(acksNeeded_) + " workers");
  }
  return true;
}

void SafepointController::resumeWorld() {
  std::lock_guard<std::mutex> lock(mu_);
  if (!stopRequested_) fail(ErrorKind::Protocol, "resume without a pending stop");
  ++epoch_;
  stopRequested_.store(false);
  for (auto& m : modes_) {
    if (m == WorkerMode::Parked) {
      m = WorkerMode::Active;
      ++active_;
      --parked_;
    }
  }
  if (trace_ != nullptr) trace_->emit(kNoWorker, event::kGcResume, {{"epoch", epoch_}});
  workerCv_.notify_all();
}

void SafepointController::shutdown() {
  std::lock_guard<std::mutex> lock(mu_);
  shutdown_ = true;
  collectorCv_.notify_all();
  workerCv_.notify_all();
}

void SafepointController::abort() {
  std::lock_guard<std::mutex> lock(mu_);
  aborted_.store(true);
  collectorCv_.notify_all();
  workerCv_.notify_all();
}

std::uint64_t SafepointController::epoch() const {
  std::lock_guard<std::mutex> lock(mu_);
  return epoch_;
}

int SafepointController::acksNeeded() const {
  std::lock_guard<std::mutex> lock(mu_);
  return acksNeeded_;
}

int SafepointController::acksReceived() const {
  std::lock_guard<std::mutex> lock(mu_);
  return acksReceived_;
}

WorkerMode SafepointController::mode(int worker) const {
  std::lock_guard<std::mutex> lock(mu_);
  return modes_[worker];
}

int SafepointController::parkedCount() const {
  std::lock_guard<std::mutex> lock(mu_);
  return parked_;
}

int SafepointController::activeCount() const {
  std::lock_guard<std::mutex> lock(mu_);
  return active_;
}

std::uint64_t SafepointController::lastSafepointSpan() const {
  std::lock_guard<std::mutex> lock(mu_);
  return maxSpan_;
}

}  // namespace greenrt
