#include "greenrt/trace.hpp"

#include <istream>
#include <ostream>

#include "greenrt/error.hpp"

namespace greenrt {

namespace {

nlohmann::json toJson(const TraceEvent& e, bool withTimestamp) {
  nlohmann::json j = e.fields;
  j["seq"] = e.seq;
  j["worker"] = e.worker;
  j["kind"] = e.kind;
  if (withTimestamp) j["ts"] = e.tsMicros;
  return j;
}

}  // namespace

std::string TraceEvent::toJsonLine() const { return toJson(*this, true).dump(); }

std::string TraceEvent::toJsonLineNoTimestamp() const { return toJson(*this, false).dump(); }

TraceEvent TraceEvent::fromJsonLine(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("bad trace line: ") + e.what());
  }
  if (!j.is_object() || !j.contains("seq") || !j.contains("kind") || !j.contains("worker")) {
    fail(ErrorKind::Parse, "trace line missing seq/kind/worker: " + line);
  }
  TraceEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.kind = j.at("kind").get<std::string>();
  e.worker = j.at("worker").get<int>();
  if (j.contains("ts")) e.tsMicros = j.at("ts").get<std::int64_t>();
  j.erase("seq");
  j.erase("kind");
  j.erase("worker");
  j.erase("ts");
  e.fields = std::move(j);
  return e;
}

TraceSink::TraceSink() : start_(std::chrono::steady_clock::now()) {}

void TraceSink::emit(int worker, const char* kind, nlohmann::json fields) {
  auto now = std::chrono::steady_clock::now();
  std::lock_guard<std::mutex> lock(mu_);
  TraceEvent e;
  e.seq = events_.size() + 1;
  e.tsMicros = std::chrono::duration_cast<std::chrono::microseconds>(now - start_).count();
  e.worker = worker;
  e.kind = kind;
  e.fields = std::move(fields);
  events_.push_back(std::move(e));
}

std::vector<TraceEvent> TraceSink::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_;
}

std::size_t TraceSink::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_.size();
}

void TraceSink::writeJsonLines(std::ostream& out) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& e : events_) out << e.toJsonLine() << '\n';
}

std::vector<TraceEvent> readTrace(std::istream& in) {
  std::vector<TraceEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    events.push_back(TraceEvent::fromJsonLine(line));
  }
  return events;
}

}  // namespace greenrt
