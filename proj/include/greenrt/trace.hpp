#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace greenrt {

/// Worker id used for events emitted by the collector thread or the harness.
inline constexpr int kNoWorker = -1;

namespace event {
inline constexpr const char* kRunStart = "run-start";
inline constexpr const char* kRunEnd = "run-end";
inline constexpr const char* kSpawn = "spawn";
inline constexpr const char* kDispatch = "dispatch";
inline constexpr const char* kPreempt = "preempt";
inline constexpr const char* kYield = "yield";
inline constexpr const char* kExit = "exit";
inline constexpr const char* kLabRefill = "alloc-lab-refill";
inline constexpr const char* kGcRequest = "gc-request";
inline constexpr const char* kGcAck = "gc-ack";
inline constexpr const char* kGcPark = "gc-park";
inline constexpr const char* kGcStart = "gc-start";
inline constexpr const char* kGcEnd = "gc-end";
inline constexpr const char* kGcResume = "gc-resume";
inline constexpr const char* kStackGrow = "stack-grow";
inline constexpr const char* kError = "error";
}  // namespace event

struct TraceEvent {
  std::uint64_t seq = 0;
  std::int64_t tsMicros = 0;  // informational only
  int worker = kNoWorker;
  std::string kind;
  nlohmann::json fields = nlohmann::json::object();

  /// One JSON object per line. Keys are emitted in sorted order.
  std::string toJsonLine() const;
  /// Same as toJsonLine() without the timestamp.
  std::string toJsonLineNoTimestamp() const;
  static TraceEvent fromJsonLine(const std::string& line);
};

/// Serialized single-consumer event log. Sequence numbers are assigned under
/// the sink lock, so events emitted while holding another runtime lock keep
/// the order that lock imposes.
class TraceSink {
 public:
  TraceSink();

  void emit(int worker, const char* kind, nlohmann::json fields = nlohmann::json::object());

  std::vector<TraceEvent> snapshot() const;
  std::size_t size() const;
  void writeJsonLines(std::ostream& out) const;

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<TraceEvent> readTrace(std::istream& in);

}  // namespace greenrt
