#include "greenrt/runtime.hpp"

#include <chrono>

namespace greenrt {

namespace {

Scheduler::Options schedulerOptions(const StaticConfig& cfg) {
  Scheduler::Options o;
  o.maxPrio = static_cast<int>(cfg.maxPrio);
  o.numWorkers = static_cast<int>(cfg.numWorkers);
  o.quantumPolls = cfg.quantumPolls;
  o.mode = cfg.quantumMode;
  o.quantumMicros = cfg.quantumMicros;
  return o;
}

HeapConfig heapConfig(const StaticConfig& cfg, bool identity) {
  HeapConfig h;
  h.totalWords = cfg.heapWords;
  h.labWords = cfg.labWords;
  h.numWorkers = static_cast<int>(cfg.numWorkers);
  h.trackIdentity = identity;
  return h;
}

}  // namespace

Runtime::Runtime(const Program& program, RunOptions opts, TraceSink* trace)
    : program_(program),
      cfg_(validateConfig(opts.config)),
      opts_(std::move(opts)),
      constants_(opts_.constants ? *opts_.constants : ConstantsView(probeConstants(TargetProfile::Host))),
      trace_(trace),
      shadow_(opts_.shadowAudit ? std::make_unique<ShadowGraph>() : nullptr),
      heap_(heapConfig(cfg_, opts_.shadowAudit)),
      collector_(heap_),
      controller_(static_cast<int>(cfg_.numWorkers), trace),
      scheduler_(schedulerOptions(cfg_), trace),
      state_(cfg_, program_.globals, program_.globalsMask),
      workers_(std::make_unique<WorkerCtx[]>(cfg_.numWorkers)) {
  if (program_.entry < 0) fail(ErrorKind::Program, "program has no entry function");
  heap_.setTrace(trace_);
  if (shadow_) heap_.setObserver(shadow_.get());
  heap_.setCollectionTrigger([this](int w) { onCollectionNeeded(w); });
  collector_.setIgnoreFrameMasks(opts_.ignoreFrameMasks);
  controller_.setResumeHook([this](int w) { heap_.revalidateLab(w); });
  scheduler_.setStallHandler([this] { onStall(); });
}

Runtime::~Runtime() = default;

void Runtime::onCollectionNeeded(int worker) {
  if (!threaded_.load()) {
    collectNow();
    return;
  }
  if (!controller_.requestCollection(worker)) throw AbortSignal{};
}

void Runtime::visitRoots(Collector& c) {
  auto l = scheduler_.lock();
  for (GreenThread& t : threads_) {
    if (t.state != ThreadState::Dead) t.stackRef = c.forwardRef(t.stackRef);
  }
  for (int w = 0; w < state_.numWorkers(); ++w) {
    WorkerRegisters& r = state_.regs(w);
    if (workers_[w].current != nullptr) r.stackBottom = workers_[w].current->stackRef.offset();
  }
  for (int row = 0; row < state_.numRows(); ++row) {
    for (std::uint32_t i = 0; i < state_.globalCount(); ++i) {
      if (state_.globalIsRef(i)) c.forwardSlot(state_.globalSlot(row, i));
    }
  }
}

CollectionReport Runtime::runCollection(std::int64_t pauseStartMicros) {
  for (int w = 0; w < state_.numWorkers(); ++w) {
    if (workers_[w].inFrameConstruction.load()) {
      fail(ErrorKind::Fatal, "collection started while worker " + std::to_string(w) + " was building a frame");
    }
  }
  const std::uint64_t index = collector_.history().size() + 1;
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kGcStart, {{"collection", index}, {"frontier", heap_.globalFrontier()}});
  }
  CollectionReport rep = collector_.collect([this](Collector& c) { visitRoots(c); });
  rep.safepointSpan = controller_.lastSafepointSpan();
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kGcEnd,
                 {{"collection", rep.index}, {"liveWords", rep.liveWords}, {"copiedObjects", rep.copiedObjects}});
  }
  std::vector<std::string> problems;
  std::uint64_t shadowBad = 0;
  std::uint64_t heapBad = 0;
  if (shadow_) {
    auto p = shadow_->compare(heap_);
    shadowBad = p.size();
    problems.insert(problems.end(), p.begin(), p.end());
    shadow_->prune();
  }
  if (opts_.heapAudit) {
    auto p = heap_.audit();
    heapBad = p.size();
    problems.insert(problems.end(), p.begin(), p.end());
  }
  rep.pauseMicros = monotonicMicros() - pauseStartMicros;
  std::lock_guard<std::mutex> l(statsMu_);
  shadowViolations_ += shadowBad;
  heapAuditViolations_ += heapBad;
  for (auto& m : problems) {
    if (auditMessages_.size() < 100) auditMessages_.push_back("collection " + std::to_string(rep.index) + ": " + m);
  }
  collections_.push_back(rep);
  return rep;
}

CollectionReport Runtime::collectNow() {
  const bool wasCollector = inCollectorContext();
  setCollectorContext(true);
  try {
    CollectionReport rep = runCollection(monotonicMicros());
    setCollectorContext(wasCollector);
    return rep;
  } catch (...) {
    setCollectorContext(wasCollector);
    throw;
  }
}

void Runtime::collectorMain() {
  setCollectorContext(true);
  try {
    while (controller_.waitForCollectionRequest()) {
      const std::int64_t start = monotonicMicros();
      if (!controller_.requestStop()) break;
      CollectionReport rep = runCollection(start);
      controller_.resumeWorld();
      std::lock_guard<std::mutex> l(statsMu_);
      // Pause runs until the world is released.
      collections_.back().pauseMicros = monotonicMicros() - start;
      (void)rep;
    }
  } catch (const Error& e) {
    recordFailure(e, kNoWorker);
  } catch (const std::exception& e) {
    recordFailure(Error(ErrorKind::Fatal, e.what()), kNoWorker);
  }
}

void Runtime::workerMain(int worker) {
  setCurrentWorkerId(worker);
  WorkerCtx& ctx = workers_[worker];
  try {
    while (!aborted_.load(std::memory_order_relaxed)) {
      if (ctx.current == nullptr) {
        controller_.leaveActive(worker);
        auto tid = scheduler_.waitForWork(worker);
        if (!tid) break;
        if (!controller_.enterActive(worker)) break;
        install(worker, *tid);
      }
      while (ctx.current != nullptr && !aborted_.load(std::memory_order_relaxed)) step(worker);
    }
  } catch (const AbortSignal&) {
  } catch (const Error& e) {
    recordFailure(e, worker);
  } catch (const std::exception& e) {
    recordFailure(Error(ErrorKind::Fatal, e.what()), worker);
  }
  controller_.leaveActive(worker);
}

void Runtime::recordFailure(const Error& e, int worker) {
  {
    std::lock_guard<std::mutex> l(failMu_);
    if (failure_) return;
    failure_ = e;
  }
  aborted_.store(true);
  if (trace_ != nullptr) {
    trace_->emit(worker, event::kError, {{"kind", errorKindName(e.kind())}, {"message", e.detail()}});
  }
  scheduler_.shutdown();
  controller_.abort();
}

// Runs under the scheduler lock once every worker is idle with nothing ready.
void Runtime::onStall() {
  if (live_ == 0) {
    scheduler_.shutdownLocked();
    return;
  }
  {
    std::lock_guard<std::mutex> l(failMu_);
    if (!failure_) {
      failure_ = Error(ErrorKind::Deadlock, std::to_string(live_) + " live threads and none runnable");
      deadlock_ = true;
    }
  }
  aborted_.store(true);
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kError,
                 {{"kind", errorKindName(ErrorKind::Deadlock)}, {"message", failure_->detail()}});
  }
  scheduler_.shutdownLocked();
  controller_.abort();
}

ExitReport Runtime::run() {
  const auto t0 = std::chrono::steady_clock::now();
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kRunStart,
                 {{"workers", cfg_.numWorkers},
                  {"heapWords", cfg_.heapWords},
                  {"labWords", cfg_.labWords},
                  {"maxPrio", cfg_.maxPrio},
                  {"maxThreads", cfg_.maxThreads},
                  {"quantumPolls", cfg_.quantumPolls},
                  {"k", program_.maxPollFreeRun == kUnboundedRun ? -1 : static_cast<std::int64_t>(program_.maxPollFreeRun)}});
  }
  try {
    spawn(kNoWorker, static_cast<int>(cfg_.entryPriority), program_.entry, {}, 0);
  } catch (const Error& e) {
    recordFailure(e, kNoWorker);
  }
  if (!aborted_.load()) {
    threaded_.store(true);
    std::thread collector([this] { collectorMain(); });
    std::vector<std::thread> workers;
    for (int w = 0; w < static_cast<int>(cfg_.numWorkers); ++w) workers.emplace_back([this, w] { workerMain(w); });
    for (auto& th : workers) th.join();
    controller_.shutdown();
    collector.join();
    threaded_.store(false);
  }
  wallMillis_ = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ExitReport rep = report();
  if (trace_ != nullptr) {
    trace_->emit(kNoWorker, event::kRunEnd,
                 {{"status", rep.exitStatus}, {"collections", rep.collections.size()}, {"instructions", rep.instructions}});
  }
  return rep;
}

ExitReport Runtime::report() {
  ExitReport rep;
  {
    std::lock_guard<std::mutex> l(failMu_);
    if (failure_) {
      rep.ok = false;
      rep.errorKind = failure_->kind();
      rep.errorMessage = failure_->what();
      rep.exitStatus = exitStatusFor(failure_->kind());
      rep.deadlock = deadlock_;
    }
  }
  {
    auto l = scheduler_.lock();
    for (const GreenThread& t : threads_) rep.threads.push_back({t.tid, t.priority, t.exitValue});
    rep.exitOrder = exitOrder_;
    rep.threadsSpawned = threads_.size();
    rep.maxLiveThreads = maxLive_;
    rep.waitByPriority = waits_;
  }
  {
    std::lock_guard<std::mutex> l(statsMu_);
    rep.collections = collections_;
    rep.shadowViolations = shadowViolations_;
    rep.heapAuditViolations = heapAuditViolations_;
    rep.auditMessages = auditMessages_;
  }
  rep.instructions = instructions_.load();
  rep.dispatches = scheduler_.dispatches();
  rep.preemptions = scheduler_.preemptions();
  rep.wakeups = scheduler_.wakeups();
  rep.yields = yields_.load();
  rep.stackGrowths = stackGrowths_.load();
  rep.labRefills = heap_.labRefills();
  rep.labRevalidations = heap_.labRevalidations();
  rep.allocatedWords = allocatedWords_.load();
  rep.maxPollFreeRun = program_.maxPollFreeRun;
  rep.isolationViolations = state_.isolationViolations();
  rep.wallMillis = wallMillis_;
  if (rep.ok && (rep.shadowViolations > 0 || rep.heapAuditViolations > 0)) rep.exitStatus = kExitAudit;
  return rep;
}

ExitReport runProgram(const Program& program, const RunOptions& opts, TraceSink* trace) {
  try {
    Runtime rt(program, opts, trace);
    return rt.run();
  } catch (const Error& e) {
    ExitReport rep;
    rep.ok = false;
    rep.errorKind = e.kind();
    rep.errorMessage = e.what();
    rep.exitStatus = exitStatusFor(e.kind());
    return rep;
  }
}

}  // namespace greenrt
