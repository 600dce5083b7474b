#include "greenrt/scheduler.hpp"

#include "greenrt/error.hpp"
#include "greenrt/trace.hpp"

namespace greenrt {

ReadyQueues::ReadyQueues(int maxPrio) : levels_(static_cast<std::size_t>(maxPrio) + 1) {
  if (maxPrio < 0) fail(ErrorKind::Config, "maxPrio must be non-negative");
}

void ReadyQueues::push(Tid tid, int prio) {
  if (prio < 0 || prio > maxPrio()) {
    fail(ErrorKind::Protocol, "priority " + std::to_string(prio) + " out of range 0.." + std::to_string(maxPrio()));
  }
  if (!queued_.insert(tid).second) fail(ErrorKind::Protocol, "thread " + std::to_string(tid) + " is already queued");
  levels_[static_cast<std::size_t>(prio)].push_back(tid);
  ++size_;
}

std::optional<Tid> ReadyQueues::popHighest() {
  for (auto it = levels_.rbegin(); it != levels_.rend(); ++it) {
    if (!it->empty()) {
      Tid tid = it->front();
      it->pop_front();
      queued_.erase(tid);
      --size_;
      return tid;
    }
  }
  return std::nullopt;
}

bool ReadyQueues::remove(Tid tid) {
  if (queued_.erase(tid) == 0) return false;
  for (auto& level : levels_) {
    for (auto it = level.begin(); it != level.end(); ++it) {
      if (*it == tid) {
        level.erase(it);
        --size_;
        return true;
      }
    }
  }
  return true;
}

int ReadyQueues::highestPriority() const {
  for (int p = maxPrio(); p >= 0; --p) {
    if (!levels_[static_cast<std::size_t>(p)].empty()) return p;
  }
  return -1;
}

Scheduler::Scheduler(const Options& opts, TraceSink* trace)
    : opts_(opts),
      trace_(trace),
      queues_(opts.maxPrio),
      workers_(std::make_unique<WorkerSlot[]>(static_cast<std::size_t>(opts.numWorkers))) {
  if (opts.numWorkers < 1) fail(ErrorKind::Config, "scheduler needs at least one worker");
  if (opts.quantumPolls == 0) fail(ErrorKind::Config, "quantum budget must be at least 1");
}

void Scheduler::enqueueLocked(Tid tid, int prio) {
  queues_.push(tid, prio);
  if (queuedPrio_.size() <= tid) queuedPrio_.resize(static_cast<std::size_t>(tid) + 1, -1);
  queuedPrio_[tid] = prio;
  refreshMaxLocked();
  if (idle_ > 0) {
    wakeups_.fetch_add(1);
    workCv_.notify_one();
  }
}

std::optional<Tid> Scheduler::pickLocked(int worker) {
  auto tid = queues_.popHighest();
  if (!tid) return std::nullopt;
  refreshMaxLocked();
  dispatches_.fetch_add(1);
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kDispatch,
                 {{"tid", *tid}, {"prio", queuedPrio_[*tid]}, {"polls", workers_[worker].polls.load()}});
  }
  return tid;
}

nlohmann::json Scheduler::pollSnapshot() const {
  nlohmann::json out = nlohmann::json::array();
  for (int w = 0; w < opts_.numWorkers; ++w) out.push_back(workers_[w].polls.load());
  return out;
}

void Scheduler::enqueue(Tid tid, int prio) {
  auto l = lock();
  enqueueLocked(tid, prio);
}

std::optional<Tid> Scheduler::pickNext(int worker) {
  auto l = lock();
  return pickLocked(worker);
}

Tid Scheduler::switchAway(int worker, Tid current, int prio, const char* kind) {
  auto l = lock();
  return switchAwayLocked(worker, current, prio, kind);
}

Tid Scheduler::switchAwayLocked(int worker, Tid current, int prio, const char* kind, std::optional<Tid> target) {
  if (target && (*target == current || !queues_.contains(*target))) {
    fail(ErrorKind::Protocol, "thread " + std::to_string(*target) + " is not ready");
  }
  enqueueLocked(current, prio);
  if (trace_ != nullptr) {
    trace_->emit(worker, kind,
                 {{"tid", current},
                  {"prio", prio},
                  {"polls", workers_[worker].polls.load()},
                  {"snapshot", pollSnapshot()}});
  }
  if (std::string_view(kind) == event::kPreempt) preemptions_.fetch_add(1);
  if (!target) {
    // Never empty: `current` was just queued.
    return *pickLocked(worker);
  }
  queues_.remove(*target);
  refreshMaxLocked();
  dispatches_.fetch_add(1);
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kDispatch,
                 {{"tid", *target},
                  {"prio", queuedPrio_[*target]},
                  {"polls", workers_[worker].polls.load()},
                  {"directed", true}});
  }
  return *target;
}

std::optional<Tid> Scheduler::waitForWork(int worker) {
  auto l = lock();
  ++idle_;
  for (;;) {
    if (shutdown_) break;
    if (!queues_.empty()) {
      --idle_;
      return pickLocked(worker);
    }
    if (idle_ == opts_.numWorkers && stallHandler_) {
      stallHandler_();
      if (shutdown_) break;
    }
    workCv_.wait(l);
  }
  --idle_;
  return std::nullopt;
}

void Scheduler::shutdownLocked() {
  shutdown_ = true;
  workCv_.notify_all();
}

void Scheduler::shutdown() {
  auto l = lock();
  shutdownLocked();
}

bool Scheduler::isShutdown() const {
  std::lock_guard<std::mutex> l(mu_);
  return shutdown_;
}

int Scheduler::idleWorkers() const {
  std::lock_guard<std::mutex> l(mu_);
  return idle_;
}

std::size_t Scheduler::readyCount() const {
  std::lock_guard<std::mutex> l(mu_);
  return queues_.size();
}

void Scheduler::startQuantum(int worker) {
  auto& slot = workers_[worker];
  slot.budget = opts_.quantumPolls;
  slot.freshQuantum = true;
  if (opts_.mode == QuantumMode::Timer) slot.sliceStart = std::chrono::steady_clock::now();
}

PreemptDecision Scheduler::preemptCheck(int worker, int currentPrio) {
  auto& slot = workers_[worker];
  slot.polls.fetch_add(1);
  const int ready = maxReady_.load();
  if (ready > currentPrio) return PreemptDecision::Reschedule;
  if (slot.freshQuantum) {
    slot.freshQuantum = false;
    return PreemptDecision::Continue;
  }
  bool exhausted = false;
  if (opts_.mode == QuantumMode::Polls) {
    if (slot.budget > 0) --slot.budget;
    exhausted = slot.budget == 0;
  } else {
    auto elapsed = std::chrono::steady_clock::now() - slot.sliceStart;
    exhausted = elapsed >= std::chrono::microseconds(opts_.quantumMicros);
  }
  if (!exhausted) return PreemptDecision::Continue;
  if (ready >= 0 && ready >= currentPrio) return PreemptDecision::Reschedule;
  // No peer at this level: keep running on a fresh budget.
  startQuantum(worker);
  return PreemptDecision::Continue;
}

}  // namespace greenrt
