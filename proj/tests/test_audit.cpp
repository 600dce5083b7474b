#include <doctest.h>

#include <string>
#include <vector>

#include "greenrt/audit.hpp"
#include "greenrt/runtime.hpp"
#include "greenrt/trace.hpp"
#include "support/harness.hpp"

using namespace greenrt;
using nlohmann::json;

namespace {

struct Builder {
  std::vector<TraceEvent> events;

  Builder& add(int worker, const std::string& kind, json fields = json::object()) {
    TraceEvent e;
    e.seq = events.size() + 1;
    e.worker = worker;
    e.kind = kind;
    e.fields = std::move(fields);
    events.push_back(std::move(e));
    return *this;
  }
};

// Two workers, K = 4. Thread 1 runs on worker 0 and thread 2 on worker 1,
// then one clean collection.
Builder cleanPrefix() {
  Builder b;
  b.add(kNoWorker, event::kRunStart, {{"k", 4}, {"maxThreads", 4}, {"workers", 2}})
      .add(kNoWorker, event::kSpawn, {{"tid", 1}, {"prio", 1}, {"live", 1}, {"snapshot", {0, 0}}})
      .add(0, event::kDispatch, {{"tid", 1}, {"prio", 1}, {"polls", 0}})
      .add(0, event::kSpawn, {{"tid", 2}, {"prio", 1}, {"live", 2}, {"snapshot", {0, 0}}})
      .add(1, event::kDispatch, {{"tid", 2}, {"prio", 1}, {"polls", 0}})
      .add(0, event::kGcRequest, {{"needed", 2}, {"instr", {10, 20}}})
      .add(1, event::kGcAck, {{"instr", 22}})
      .add(0, event::kGcAck, {{"instr", 10}})
      .add(kNoWorker, event::kGcStart, {{"collection", 1}})
      .add(kNoWorker, event::kGcEnd, {{"collection", 1}})
      .add(kNoWorker, event::kGcResume, json::object());
  return b;
}

Builder finish(Builder b) {
  b.add(0, event::kExit, {{"tid", 1}, {"value", 0}, {"live", 1}, {"polls", 3}})
      .add(1, event::kExit, {{"tid", 2}, {"value", 0}, {"live", 0}, {"polls", 3}});
  return b;
}

bool hasRule(const AuditResult& r, const std::string& rule) {
  for (const auto& v : r.violations) {
    if (v.rfind("[" + rule + "]", 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("a clean synthetic trace passes") {
  AuditResult r = auditTrace(finish(cleanPrefix()).events);
  CHECK(r.violations.empty());
  CHECK(r.stats.collections == 1);
  CHECK(r.stats.dispatches == 2);
  CHECK(r.stats.maxAckSpan == 2);
  CHECK(r.stats.maxLive == 2);
}

TEST_CASE("a refill inside the stop window is a named violation") {
  Builder b;
  auto base = cleanPrefix();
  for (auto& e : base.events) {
    b.add(e.worker, e.kind, e.fields);
    if (e.kind == event::kGcStart) b.add(1, event::kLabRefill, {{"words", 64}});
  }
  AuditResult r = auditTrace(finish(b).events);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0] == "[stop-window] seq 10: alloc-lab-refill by worker 1 while the world is stopped");
}

TEST_CASE("heap activity after a worker's ack is a violation") {
  Builder b;
  for (auto& e : cleanPrefix().events) {
    b.add(e.worker, e.kind, e.fields);
    if (e.kind == event::kGcAck && e.worker == 1) b.add(1, event::kStackGrow, {{"tid", 2}, {"from", 16}, {"to", 32}});
  }
  CHECK(hasRule(auditTrace(finish(b).events), "stop-window"));
}

TEST_CASE("a slow acknowledgement breaks the K+1 bound") {
  Builder b;
  for (auto& e : cleanPrefix().events) {
    json f = e.fields;
    if (e.kind == event::kGcAck && e.worker == 1) f["instr"] = 26;  // 6 > K + 1
    b.add(e.worker, e.kind, f);
  }
  AuditResult r = auditTrace(finish(b).events);
  CHECK(hasRule(r, "safepoint-latency"));
  CHECK(r.stats.maxAckSpan == 6);

  AuditOptions loose;
  loose.k = 10;
  CHECK(auditTrace(finish(b).events, loose).ok());
}

TEST_CASE("starting a collection before every ack is a violation") {
  Builder b;
  for (auto& e : cleanPrefix().events) {
    if (e.kind == event::kGcAck && e.worker == 0) continue;
    b.add(e.worker, e.kind, e.fields);
  }
  CHECK(hasRule(auditTrace(finish(b).events), "gc-protocol"));
}

TEST_CASE("a trace that ends inside a collection is a violation") {
  Builder b;
  for (auto& e : cleanPrefix().events) {
    if (e.kind == event::kGcResume) break;
    b.add(e.worker, e.kind, e.fields);
  }
  CHECK_FALSE(auditTrace(b.events).ok());
}

TEST_CASE("dispatch order is checked against a model ready queue") {
  Builder prio;
  prio.add(kNoWorker, event::kRunStart, {{"k", 4}, {"maxThreads", 8}})
      .add(kNoWorker, event::kSpawn, {{"tid", 1}, {"prio", 1}, {"snapshot", {0}}})
      .add(kNoWorker, event::kSpawn, {{"tid", 2}, {"prio", 3}, {"snapshot", {0}}})
      .add(0, event::kDispatch, {{"tid", 1}, {"prio", 1}, {"polls", 0}});
  CHECK(hasRule(auditTrace(prio.events), "dispatch-priority"));

  Builder fifo;
  fifo.add(kNoWorker, event::kRunStart, {{"k", 4}, {"maxThreads", 8}})
      .add(kNoWorker, event::kSpawn, {{"tid", 1}, {"prio", 2}, {"snapshot", {0}}})
      .add(kNoWorker, event::kSpawn, {{"tid", 2}, {"prio", 2}, {"snapshot", {0}}})
      .add(0, event::kDispatch, {{"tid", 2}, {"prio", 2}, {"polls", 0}});
  CHECK(hasRule(auditTrace(fifo.events), "fifo"));

  // A directed switch may take any ready thread.
  fifo.events.back().fields["directed"] = true;
  CHECK(auditTrace(fifo.events).ok());
}

TEST_CASE("a low-priority thread running past the preemption bound is flagged") {
  Builder b;
  b.add(kNoWorker, event::kRunStart, {{"k", 2}, {"maxThreads", 8}})
      .add(kNoWorker, event::kSpawn, {{"tid", 1}, {"prio", 1}, {"snapshot", {0}}})
      .add(0, event::kDispatch, {{"tid", 1}, {"prio", 1}, {"polls", 0}})
      .add(0, event::kSpawn, {{"tid", 2}, {"prio", 5}, {"snapshot", {10}}})
      .add(0, event::kPreempt, {{"tid", 1}, {"prio", 1}, {"polls", 14}});
  AuditResult r = auditTrace(b.events);
  CHECK(hasRule(r, "preempt-latency"));
  CHECK(r.stats.maxPreemptLatency == 4);

  b.events.back().fields["polls"] = 11;
  CHECK(auditTrace(b.events).ok());
}

TEST_CASE("thread cap and sequence order") {
  Builder cap;
  cap.add(kNoWorker, event::kRunStart, {{"k", 4}, {"maxThreads", 1}})
      .add(kNoWorker, event::kSpawn, {{"tid", 1}, {"prio", 1}, {"snapshot", {0}}})
      .add(kNoWorker, event::kSpawn, {{"tid", 2}, {"prio", 1}, {"snapshot", {0}}});
  CHECK(hasRule(auditTrace(cap.events), "thread-cap"));

  Builder seq = finish(cleanPrefix());
  seq.events[4].seq = 2;
  CHECK(hasRule(auditTrace(seq.events), "seq"));
}

TEST_CASE("real runs produce clean traces") {
  RunOptions o;
  o.config.heapWords = 4096;
  o.config.labWords = 64;
  o.config.initialStackWords = 64;
  o.config.maxStackWords = 1024;
  o.config.numWorkers = 4;
  for (const char* name : {"churn.gasm", "tree.gasm", "priorities.gasm", "fanin.gasm"}) {
    CAPTURE(name);
    auto run = testing::runTraced(testing::loadNamed(name), o);
    REQUIRE(run.report.ok);
    AuditResult r = auditTrace(run.events);
    CHECK(r.violations.empty());
    CHECK(r.stats.collections == run.report.collections.size());
    CHECK(r.stats.dispatches == run.report.dispatches);
  }
}
