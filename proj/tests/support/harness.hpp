#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "greenrt/audit.hpp"
#include "greenrt/runtime.hpp"
#include "greenrt/trace.hpp"
#include "greenrt/vmprog.hpp"

namespace greenrt::testing {

inline std::string programsDir() { return GREENRT_PROGRAMS_DIR; }

inline std::string readFile(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Program loadNamed(const std::string& name, const LoadOptions& lo = {}) {
  return loadProgramFile(programsDir() + "/" + name, lo);
}

struct TracedRun {
  ExitReport report;
  std::vector<TraceEvent> events;
};

inline TracedRun runTraced(const Program& prog, const RunOptions& opts) {
  TraceSink sink;
  TracedRun r;
  r.report = runProgram(prog, opts, &sink);
  r.events = sink.snapshot();
  return r;
}

inline std::string traceWithoutTimestamps(const std::vector<TraceEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.toJsonLineNoTimestamp();
    out += '\n';
  }
  return out;
}

inline std::size_t countKind(const std::vector<TraceEvent>& events, const std::string& kind) {
  std::size_t n = 0;
  for (const auto& e : events) n += e.kind == kind ? 1 : 0;
  return n;
}

}  // namespace greenrt::testing
