#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "greenrt/trace.hpp"

namespace greenrt {

struct AuditOptions {
  /// Max instructions between safe points. Taken from the run-start event
  /// when unset; no latency bound is checked when neither is available.
  std::optional<std::uint64_t> k;
  std::optional<std::uint64_t> maxThreads;
};

struct AuditStats {
  std::uint64_t events = 0;
  std::uint64_t dispatches = 0;
  std::uint64_t collections = 0;
  std::uint64_t maxAckSpan = 0;
  std::uint64_t maxPreemptLatency = 0;
  std::uint64_t maxLive = 0;
};

struct AuditResult {
  std::vector<std::string> violations;
  AuditStats stats;
  bool ok() const { return violations.empty(); }
};

/// Checks a complete trace: sequence order, the stop-the-world protocol and
/// its latency bound, no heap activity inside stop windows, dispatch priority
/// and FIFO order against a reference ready-queue model, preemption latency,
/// and the thread cap. Each violation string starts with the rule name in
/// brackets.
AuditResult auditTrace(const std::vector<TraceEvent>& events, const AuditOptions& opts = {});

}  // namespace greenrt
