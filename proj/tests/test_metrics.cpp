#include <doctest.h>

#include <algorithm>

#include "greenrt/metrics.hpp"
#include "support/harness.hpp"

using namespace greenrt;

TEST_CASE("pause statistics over hand-made collections") {
  ExitReport r;
  r.threads.push_back({1, 1, 7});
  r.collections.push_back({1, 100, 10, 4000, 30, 2});
  r.collections.push_back({2, 120, 12, 4000, 50, 5});
  r.collections.push_back({3, 90, 9, 4000, 10, 0});
  r.maxPollFreeRun = 6;
  r.waitByPriority[2] = {4, 100, 60};
  nlohmann::json m = emitMetrics(r);
  CHECK(m["status"] == 0);
  CHECK(m["exitValue"] == 7);
  CHECK(m["collections"] == 3);
  CHECK(m["pause"]["maxMicros"] == 50);
  CHECK(m["pause"]["meanMicros"].get<double>() == doctest::Approx(30.0));
  CHECK(m["pause"]["maxSpan"] == 5);
  CHECK(m["pause"]["meanSpan"].get<double>() == doctest::Approx(7.0 / 3.0));
  CHECK(m["collectionRows"].size() == 3);
  CHECK(m["collectionRows"][1]["liveWords"] == 120);
  CHECK(m["k"] == 6);
  CHECK(m["waitByPriority"]["2"]["meanMicros"].get<double>() == doctest::Approx(25.0));
  CHECK_FALSE(m.contains("error"));
}

TEST_CASE("no collections and an unbounded K") {
  ExitReport r;
  r.ok = false;
  r.errorKind = ErrorKind::OutOfMemory;
  r.errorMessage = "OutOfMemoryError: full";
  r.exitStatus = kExitRuntime;
  r.maxPollFreeRun = kUnboundedRun;
  nlohmann::json m = emitMetrics(r);
  CHECK(m["pause"]["meanMicros"] == 0.0);
  CHECK(m["k"].is_null());
  CHECK(m["error"]["kind"] == "OutOfMemory");
  CHECK(m["status"] == kExitRuntime);
  CHECK_FALSE(m.contains("exitValue"));
}

TEST_CASE("reported spans agree with the request and ack counters in the trace") {
  RunOptions o;
  o.config.heapWords = 4096;
  o.config.labWords = 64;
  o.config.initialStackWords = 64;
  o.config.maxStackWords = 1024;
  o.config.numWorkers = 4;
  auto run = testing::runTraced(testing::loadNamed("priorities.gasm"), o);
  REQUIRE(run.report.ok);
  REQUIRE_FALSE(run.report.collections.empty());

  // Recompute each collection's span from the raw events.
  std::vector<std::uint64_t> spans;
  std::vector<std::uint64_t> requestInstr;
  std::uint64_t span = 0;
  for (const auto& e : run.events) {
    if (e.kind == event::kGcRequest) {
      requestInstr = e.fields["instr"].get<std::vector<std::uint64_t>>();
      span = 0;
    } else if (e.kind == event::kGcAck && !e.fields.value("idle", false)) {
      span = std::max(span, e.fields["instr"].get<std::uint64_t>() - requestInstr.at(e.worker));
    } else if (e.kind == event::kGcStart) {
      spans.push_back(span);
    }
  }
  nlohmann::json m = emitMetrics(run.report);
  REQUIRE(m["collectionRows"].size() == spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) CHECK(m["collectionRows"][i]["span"] == spans[i]);
  CHECK(m["pause"]["maxSpan"] <= run.report.maxPollFreeRun + 1);
  CHECK(m["audit"]["shadowViolations"] == 0);
}
