// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "greenrt/audit.hpp"
#include "greenrt/error.hpp"
#include "greenrt/runtime.hpp"
#include "greenrt/vmprog.hpp"
#include "support/harness.hpp"
#include "support/progen.hpp"

using namespace greenrt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double secondsSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string firstOf(const std::vector<std::string>& v) { return v.empty() ? "" : v.front(); }

// 1. Every collection in 500 generated programs matches the shadow graph.
Outcome collectorSoundness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0x5eed0001);
  std::uint64_t collections = 0;
  std::uint64_t violations = 0;
  int withCollections = 0;
  std::string firstProblem;
  const int programs = 500;
  for (int i = 0; i < programs; ++i) {
    testing::GenOptions g;
    g.seed = rng();
    g.mainOps = 120;
    g.workerOps = 60;
    g.loopIters = 200;
    g.blobMax = 600;
    RunOptions o;
    o.config.heapWords = std::uint64_t{1} << (14 + rng() % 3);
    o.config.labWords = 16u << (rng() % 4);
    o.config.initialStackWords = 64;
    o.config.maxStackWords = 4096;
    o.config.numWorkers = 1 + rng() % 4;
    o.config.quantumPolls = 1 + rng() % 20;
    o.config.seed = rng();
    o.shadowAudit = true;
    o.heapAudit = true;
    ExitReport r = runProgram(loadProgram(testing::generateProgram(g)), o);
    if (!r.ok) {
      ++violations;
      if (firstProblem.empty()) firstProblem = "program " + std::to_string(i) + ": " + r.errorMessage;
      continue;
    }
    collections += r.collections.size();
    withCollections += r.collections.empty() ? 0 : 1;
    violations += r.shadowViolations + r.heapAuditViolations;
    if (firstProblem.empty() && !r.auditMessages.empty()) firstProblem = firstOf(r.auditMessages);
  }
  const double secs = secondsSince(t0);
  Outcome out;
  out.pass = violations == 0 && collections > 0 && withCollections * 10 >= programs * 9 && secs < 300;
  std::ostringstream d;
  d << programs << " programs, " << withCollections << " collected, " << collections << " collections, "
    << violations << " violations, " << secs << " s";
  if (!firstProblem.empty()) d << "; first: " << firstProblem;
  out.detail = d.str();
  return out;
}

struct FuzzSummary {
  int runs = 0;
  int failedRuns = 0;
  std::uint64_t collections = 0;
  std::uint64_t dispatches = 0;
  std::uint64_t maxAckSpan = 0;
  std::uint64_t maxK = 0;
  std::uint64_t maxPreemptLatency = 0;
  std::vector<std::string> protocol;  // stop-window, safepoint-latency, gc-protocol
  std::vector<std::string> scheduling;  // dispatch-priority, fifo, preempt-latency
  std::vector<std::string> other;
  double seconds = 0;
};

bool ruleIs(const std::string& v, std::initializer_list<const char*> rules) {
  for (const char* r : rules) {
    if (v.rfind(std::string("[") + r + "]", 0) == 0) return true;
  }
  return false;
}

// The fuzz corpus shared by criteria 2 and 3: generated programs on 1-8
// workers with small heaps, so most runs stop the world several times.
const FuzzSummary& fuzzCorpus() {
  static FuzzSummary s = [] {
    FuzzSummary s;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(0x5eed0002);
    for (int i = 0; i < 1000; ++i) {
      testing::GenOptions g;
      g.seed = rng();
      g.maxPrio = 7;
      g.mainOps = 60;
      g.workerOps = 40;
      g.loopIters = 60;
      g.blobMax = 200;
      RunOptions o;
      o.config.heapWords = 4096u << (rng() % 3);
      o.config.labWords = 16u << (rng() % 4);
      o.config.initialStackWords = 16u << (rng() % 3);
      o.config.maxStackWords = 1024;
      o.config.numWorkers = 1 + rng() % 8;
      o.config.quantumPolls = 1 + rng() % 10;
      o.config.seed = rng();
      TraceSink sink;
      ExitReport r = runProgram(loadProgram(testing::generateProgram(g)), o, &sink);
      ++s.runs;
      if (!r.ok) {
        ++s.failedRuns;
        s.other.push_back("run " + std::to_string(i) + ": " + r.errorMessage);
      }
      AuditResult a = auditTrace(sink.snapshot());
      s.collections += a.stats.collections;
      s.dispatches += a.stats.dispatches;
      s.maxAckSpan = std::max(s.maxAckSpan, a.stats.maxAckSpan);
      s.maxPreemptLatency = std::max(s.maxPreemptLatency, a.stats.maxPreemptLatency);
      s.maxK = std::max(s.maxK, r.maxPollFreeRun);
      for (const auto& v : a.violations) {
        if (ruleIs(v, {"stop-window", "safepoint-latency", "gc-protocol"})) s.protocol.push_back(v);
        else if (ruleIs(v, {"dispatch-priority", "fifo", "preempt-latency"})) s.scheduling.push_back(v);
        else s.other.push_back(v);
      }
    }
    s.seconds = secondsSince(t0);
    return s;
  }();
  return s;
}

// 2. No heap activity inside stop windows; every ack within K+1 instructions.
Outcome stopTheWorld() {
  const FuzzSummary& s = fuzzCorpus();
  Outcome out;
  out.pass = s.protocol.empty() && s.other.empty() && s.failedRuns == 0 && s.collections > 0 && s.seconds < 600;
  std::ostringstream d;
  d << s.runs << " runs, " << s.collections << " collections, max ack span " << s.maxAckSpan << " (max K "
    << s.maxK << "), " << s.protocol.size() << " protocol violations, " << s.seconds << " s";
  if (!s.protocol.empty()) d << "; first: " << s.protocol.front();
  if (!s.other.empty()) d << "; other: " << s.other.front();
  out.detail = d.str();
  return out;
}

// 3. Dispatch priority, FIFO order and preemption latency over the same corpus.
Outcome priorityScheduling() {
  const FuzzSummary& s = fuzzCorpus();
  Outcome out;
  out.pass = s.scheduling.empty() && s.dispatches > 0;
  std::ostringstream d;
  d << s.dispatches << " dispatches, " << s.scheduling.size() << " violations, max preemption latency "
    << s.maxPreemptLatency << " polls";
  if (!s.scheduling.empty()) d << "; first: " << s.scheduling.front();
  out.detail = d.str();
  return out;
}

// 4. Depth-10^4 recursion gives the same value with tiny and huge stacks.
Outcome stackGrowth() {
  const auto t0 = std::chrono::steady_clock::now();
  Program p = testing::loadNamed("rsum.gasm");
  auto runWith = [&](std::uint64_t initial) {
    RunOptions o;
    o.config.heapWords = 262144;
    o.config.maxStackWords = 65536;
    o.config.initialStackWords = initial;
    o.shadowAudit = true;
    return testing::runTraced(p, o);
  };
  auto small = runWith(16);
  auto large = runWith(65536);
  const auto growsSmall = testing::countKind(small.events, event::kStackGrow);
  const auto growsLarge = testing::countKind(large.events, event::kStackGrow);
  const double secs = secondsSince(t0);
  Outcome out;
  out.pass = small.report.ok && large.report.ok && small.report.entryExitValue() == large.report.entryExitValue() &&
             small.report.entryExitValue() == 50005000 && growsSmall >= 9 && growsLarge == 0 &&
             small.report.shadowViolations == 0 && secs < 10;
  std::ostringstream d;
  d << "exit " << small.report.entryExitValue().value_or(-1) << " vs " << large.report.entryExitValue().value_or(-1)
    << ", stack-grow events " << growsSmall << " vs " << growsLarge << ", " << secs << " s";
  out.detail = d.str();
  return out;
}

// 5. A global written on one worker reads as 0 on another; sharing the
// globals row (the mutation) makes the same check fail.
Outcome globalsIsolation() {
  Program listing = testing::loadNamed("globals.gasm");
  auto listingRun = [&](bool isolate) {
    RunOptions o;
    o.config = loadConfigFile(testing::programsDir() + "/globals.cfg");
    o.config.isolateGlobals = isolate;
    return runProgram(listing, o);
  };

  // The same property with explicit placement: writer on worker 0, reader on 1.
  Program stepped = loadProgram(
      "globals 1\n"
      "fn main frame=1\n    EXIT\n"
      "fn writer frame=1\n    CONST s0, 42\n    SETG 0, s0\n    EXIT s0\n"
      "fn reader frame=1\n    GETG s0, 0\n    EXIT s0\n");
  auto steppedRead = [&](bool isolate) -> std::int64_t {
    RunOptions o;
    o.config.numWorkers = 2;
    o.config.isolateGlobals = isolate;
    Runtime rt(stepped, o);
    rt.spawn(kNoWorker, 1, stepped.find("writer"), {});
    const Tid reader = rt.spawn(kNoWorker, 1, stepped.find("reader"), {});
    setCurrentWorkerId(0);
    rt.dispatch(0);
    setCurrentWorkerId(1);
    rt.dispatch(1);
    rt.runSlice(0, 10);
    rt.runSlice(1, 10);
    return rt.threadInfo(reader).exitValue.value_or(-1);
  };

  ExitReport iso = listingRun(true);
  ExitReport mut = listingRun(false);
  const std::int64_t isoStep = steppedRead(true);
  const std::int64_t mutStep = steppedRead(false);
  const bool isolatedPasses = iso.ok && iso.entryExitValue() == 0 && isoStep == 0 && iso.isolationViolations == 0;
  const bool mutationFails = mut.entryExitValue() != 0 && mutStep != 0;
  Outcome out;
  out.pass = isolatedPasses && mutationFails;
  std::ostringstream d;
  d << "isolated: reader saw " << iso.entryExitValue().value_or(-1) << " (stepped " << isoStep
    << "); shared row: reader saw " << mut.entryExitValue().value_or(-1) << " (stepped " << mutStep << ")";
  out.detail = d.str();
  return out;
}

// 6. Five deterministic runs of every bundled program give identical traces.
Outcome determinism() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(testing::programsDir())) {
    if (entry.path().extension() == ".gasm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  int identical = 0;
  std::string mismatch;
  for (const auto& file : files) {
    RunOptions o;
    fs::path cfg = file;
    cfg.replace_extension(".cfg");
    if (fs::exists(cfg)) o.config = loadConfigFile(cfg.string());
    o.config.numWorkers = 1;
    o.config.deterministic = true;
    Program p = loadProgramFile(file.string());
    std::string first;
    bool same = true;
    for (int rep = 0; rep < 5; ++rep) {
      auto run = testing::runTraced(p, o);
      std::string text = testing::traceWithoutTimestamps(run.events);
      if (rep == 0) first = std::move(text);
      else same = same && text == first;
    }
    if (same) ++identical;
    else if (mismatch.empty()) mismatch = file.filename().string();
  }
  Outcome out;
  out.pass = !files.empty() && identical == static_cast<int>(files.size());
  std::ostringstream d;
  d << identical << "/" << files.size() << " programs identical across 5 runs";
  if (!mismatch.empty()) d << "; differs: " << mismatch;
  out.detail = d.str();
  return out;
}

// 7. Spawning past the cap and outgrowing the heap fail cleanly.
Outcome resourceCaps() {
  RunOptions spawnOpts;
  spawnOpts.config.maxThreads = 8;
  spawnOpts.config.numWorkers = 2;
  spawnOpts.heapAudit = true;
  spawnOpts.shadowAudit = true;
  std::string spawner = "fn main frame=2\n";
  for (int i = 0; i < 8; ++i) spawner += "    SPAWN 0, spin\n";
  spawner +=
      "    EXIT\n"
      "fn spin frame=2\n"
      "    CONST s0, 1000\n    CONST s1, 1\n"
      "Lloop:\n    SAFEPOINT\n    SUB s0, s0, s1\n    JNZ s0, Lloop\n    EXIT\n";
  auto threads = testing::runTraced(loadProgram(spawner), spawnOpts);
  const bool threadCapOk = threads.report.errorKind == ErrorKind::ThreadLimit &&
                           threads.report.maxLiveThreads == 8 && threads.report.heapAuditViolations == 0 &&
                           threads.report.shadowViolations == 0 && auditTrace(threads.events).ok();

  RunOptions heapOpts;
  heapOpts.config.heapWords = 8192;
  heapOpts.config.maxStackWords = 1024;
  heapOpts.config.numWorkers = 2;
  heapOpts.heapAudit = true;
  heapOpts.shadowAudit = true;
  const char* hog =
      "fn main frame=2 mask=0x3\n"
      "Lloop:\n"
      "    ALLOC s1, 6, 0x1\n"
      "    SETFIELD s1, 0, s0\n"
      "    MOVE s0, s1\n"
      "    JMP Lloop\n";
  auto heap = testing::runTraced(loadProgram(hog), heapOpts);
  const bool heapOk = heap.report.errorKind == ErrorKind::OutOfMemory && !heap.report.collections.empty() &&
                      heap.report.heapAuditViolations == 0 && heap.report.shadowViolations == 0 &&
                      auditTrace(heap.events).ok();

  Outcome out;
  out.pass = threadCapOk && heapOk;
  std::ostringstream d;
  d << "spawn flood: " << threads.report.errorMessage << " (max live " << threads.report.maxLiveThreads
    << "); heap flood: " << heap.report.errorMessage << " after " << heap.report.collections.size()
    << " collections; audit violations " << threads.report.heapAuditViolations + heap.report.heapAuditViolations +
                                                threads.report.shadowViolations + heap.report.shadowViolations;
  out.detail = d.str();
  return out;
}

// 8. A million two-word allocations in under ten seconds.
Outcome throughput() {
  const char* text =
      "fn main frame=3 mask=0x1\n"
      "    CONST s1, 1000000\n"
      "    CONST s2, 1\n"
      "Lloop:\n"
      "    ALLOC s0, 2, 0\n"
      "    SUB s1, s1, s2\n"
      "    JNZ s1, Lloop\n"
      "    EXIT\n";
  RunOptions o;
  o.config.heapWords = 1u << 16;
  const auto t0 = std::chrono::steady_clock::now();
  ExitReport r = runProgram(loadProgram(text), o);
  const double secs = secondsSince(t0);
  Outcome out;
  out.pass = r.ok && !r.collections.empty() && secs < 10;
  std::ostringstream d;
  d << r.collections.size() << " collections, " << r.instructions << " instructions, " << secs << " s";
  out.detail = d.str();
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"collector soundness", collectorSoundness},
      {"stop-the-world protocol", stopTheWorld},
      {"priority scheduling", priorityScheduling},
      {"stack growth transparency", stackGrowth},
      {"per-worker globals isolation", globalsIsolation},
      {"determinism", determinism},
      {"resource caps", resourceCaps},
      {"throughput smoke", throughput},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
