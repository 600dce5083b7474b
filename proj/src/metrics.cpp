#include "greenrt/metrics.hpp"

#include <algorithm>

namespace greenrt {

nlohmann::json emitMetrics(const ExitReport& run) {
  using nlohmann::json;
  json m;
  m["status"] = run.exitStatus;
  if (run.errorKind) {
    m["error"] = {{"kind", errorKindName(*run.errorKind)}, {"message", run.errorMessage}};
  }
  if (auto v = run.entryExitValue()) m["exitValue"] = *v;

  std::int64_t maxPause = 0;
  std::int64_t sumPause = 0;
  std::uint64_t maxSpan = 0;
  std::uint64_t sumSpan = 0;
  json rows = json::array();
  for (const auto& c : run.collections) {
    maxPause = std::max(maxPause, c.pauseMicros);
    sumPause += c.pauseMicros;
    maxSpan = std::max(maxSpan, c.safepointSpan);
    sumSpan += c.safepointSpan;
    rows.push_back({{"index", c.index},
                    {"liveWords", c.liveWords},
                    {"copiedObjects", c.copiedObjects},
                    {"fromSpaceWords", c.fromSpaceWords},
                    {"pauseMicros", c.pauseMicros},
                    {"span", c.safepointSpan}});
  }
  const auto n = static_cast<double>(run.collections.size());
  m["collections"] = run.collections.size();
  m["pause"] = {{"maxMicros", maxPause},
                {"meanMicros", n > 0 ? static_cast<double>(sumPause) / n : 0.0},
                {"maxSpan", maxSpan},
                {"meanSpan", n > 0 ? static_cast<double>(sumSpan) / n : 0.0}};
  m["collectionRows"] = rows;

  m["instructions"] = run.instructions;
  m["dispatches"] = run.dispatches;
  m["preemptions"] = run.preemptions;
  m["yields"] = run.yields;
  m["stackGrowths"] = run.stackGrowths;
  m["labRefills"] = run.labRefills;
  m["allocatedWords"] = run.allocatedWords;
  m["threads"] = run.threadsSpawned;
  m["maxLiveThreads"] = run.maxLiveThreads;
  if (run.maxPollFreeRun == kUnboundedRun) m["k"] = nullptr;
  else m["k"] = run.maxPollFreeRun;

  json waits = json::object();
  for (const auto& [prio, w] : run.waitByPriority) {
    waits[std::to_string(prio)] = {
        {"count", w.count},
        {"meanMicros", w.count > 0 ? static_cast<double>(w.totalMicros) / static_cast<double>(w.count) : 0.0},
        {"maxMicros", w.maxMicros}};
  }
  m["waitByPriority"] = waits;
  m["audit"] = {{"shadowViolations", run.shadowViolations},
                {"heapViolations", run.heapAuditViolations},
                {"isolationViolations", run.isolationViolations}};
  m["wallMillis"] = run.wallMillis;
  return m;
}

}  // namespace greenrt
