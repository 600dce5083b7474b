#include "greenrt/audit.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace greenrt {

namespace {

enum class GcPhase { Idle, Requested, Collecting, Ended };

struct Auditor {
  const AuditOptions& opts;
  AuditResult out;
  std::optional<std::uint64_t> k;
  std::optional<std::uint64_t> maxThreads;

  std::uint64_t lastSeq = 0;
  bool first = true;
  bool sawError = false;

  GcPhase phase = GcPhase::Idle;
  int acksNeeded = 0;
  int acksSeen = 0;
  std::vector<std::uint64_t> requestInstr;
  std::set<int> acked;

  std::map<int, std::deque<std::uint64_t>> ready;  // prio -> FIFO of tids
  std::map<std::uint64_t, int> readyPrio;
  std::map<int, int> running;                      // worker -> prio
  std::map<int, std::uint64_t> pendingSince;       // worker -> poll snapshot
  std::uint64_t live = 0;

  explicit Auditor(const AuditOptions& o) : opts(o), k(o.k), maxThreads(o.maxThreads) {}

  void violation(const TraceEvent& e, const std::string& rule, const std::string& msg) {
    if (out.violations.size() >= 200) return;
    out.violations.push_back("[" + rule + "] seq " + std::to_string(e.seq) + ": " + msg);
  }

  int topReady() const {
    for (auto it = ready.rbegin(); it != ready.rend(); ++it) {
      if (!it->second.empty()) return it->first;
    }
    return -1;
  }

  void pushReady(const TraceEvent& e, std::uint64_t tid, int prio) {
    if (readyPrio.count(tid) != 0) {
      violation(e, "fifo", "thread " + std::to_string(tid) + " queued twice");
      return;
    }
    ready[prio].push_back(tid);
    readyPrio[tid] = prio;
  }

  // Workers running below the best ready priority start a latency window.
  void refreshPending(const TraceEvent& e) {
    const int top = topReady();
    for (auto& [w, prio] : running) {
      if (prio < top) {
        if (pendingSince.count(w) == 0 && e.fields.contains("snapshot")) {
          const auto& snap = e.fields["snapshot"];
          if (w >= 0 && static_cast<std::size_t>(w) < snap.size()) pendingSince[w] = snap[w].get<std::uint64_t>();
        }
      } else {
        pendingSince.erase(w);
      }
    }
    for (auto it = pendingSince.begin(); it != pendingSince.end();) {
      if (running.count(it->first) == 0) it = pendingSince.erase(it);
      else ++it;
    }
  }

  void checkLatency(const TraceEvent& e) {
    auto it = pendingSince.find(e.worker);
    if (it == pendingSince.end() || !e.fields.contains("polls")) return;
    const auto polls = e.fields["polls"].get<std::uint64_t>();
    const std::uint64_t waited = polls >= it->second ? polls - it->second : 0;
    out.stats.maxPreemptLatency = std::max(out.stats.maxPreemptLatency, waited);
    if (k && *k != UINT64_MAX && waited > *k + 1) {
      violation(e, "preempt-latency",
                "worker " + std::to_string(e.worker) + " ran " + std::to_string(waited) +
                    " polls while a higher-priority thread was ready (bound " + std::to_string(*k + 1) + ")");
    }
  }

  void heapActivity(const TraceEvent& e) {
    if (e.worker < 0) return;
    if (phase == GcPhase::Collecting || phase == GcPhase::Ended) {
      violation(e, "stop-window", e.kind + " by worker " + std::to_string(e.worker) + " while the world is stopped");
    } else if (acked.count(e.worker) != 0) {
      violation(e, "stop-window", e.kind + " by worker " + std::to_string(e.worker) + " after its gc-ack");
    }
  }

  void onEvent(const TraceEvent& e) {
    ++out.stats.events;
    if (!first && e.seq <= lastSeq) violation(e, "seq", "sequence number does not increase");
    first = false;
    lastSeq = e.seq;
    const auto& f = e.fields;
    const std::string& kind = e.kind;

    if (kind == event::kRunStart) {
      if (!k && f.contains("k") && f["k"].get<std::int64_t>() >= 0) k = f["k"].get<std::uint64_t>();
      if (!maxThreads && f.contains("maxThreads")) maxThreads = f["maxThreads"].get<std::uint64_t>();
    } else if (kind == event::kError) {
      sawError = true;
    } else if (kind == event::kGcRequest) {
      if (phase != GcPhase::Idle) violation(e, "gc-protocol", "gc-request while a collection is in progress");
      phase = GcPhase::Requested;
      acksNeeded = f.value("needed", 0);
      acksSeen = 0;
      acked.clear();
      requestInstr.clear();
      if (f.contains("instr")) {
        for (const auto& v : f["instr"]) requestInstr.push_back(v.get<std::uint64_t>());
      }
    } else if (kind == event::kGcAck) {
      if (phase != GcPhase::Requested) violation(e, "gc-protocol", "gc-ack outside a stop request");
      if (!acked.insert(e.worker).second) violation(e, "gc-protocol", "worker acknowledged twice");
      ++acksSeen;
      const bool idle = f.value("idle", false);
      if (!idle && e.worker >= 0 && static_cast<std::size_t>(e.worker) < requestInstr.size()) {
        const auto instr = f["instr"].get<std::uint64_t>();
        const std::uint64_t span = instr - requestInstr[e.worker];
        out.stats.maxAckSpan = std::max(out.stats.maxAckSpan, span);
        if (k && *k != UINT64_MAX && span > *k + 1) {
          violation(e, "safepoint-latency",
                    "worker " + std::to_string(e.worker) + " ran " + std::to_string(span) +
                        " instructions before acknowledging (bound " + std::to_string(*k + 1) + ")");
        }
      }
    } else if (kind == event::kGcPark) {
      if (acked.count(e.worker) == 0) violation(e, "gc-protocol", "gc-park without gc-ack");
    } else if (kind == event::kGcStart) {
      if (phase != GcPhase::Requested) violation(e, "gc-protocol", "gc-start without gc-request");
      if (acksSeen != acksNeeded) {
        violation(e, "gc-protocol",
                  "gc-start after " + std::to_string(acksSeen) + " of " + std::to_string(acksNeeded) + " acks");
      }
      phase = GcPhase::Collecting;
      ++out.stats.collections;
    } else if (kind == event::kGcEnd) {
      if (phase != GcPhase::Collecting) violation(e, "gc-protocol", "gc-end without gc-start");
      phase = GcPhase::Ended;
    } else if (kind == event::kGcResume) {
      if (phase != GcPhase::Ended) violation(e, "gc-protocol", "gc-resume without a finished collection");
      phase = GcPhase::Idle;
      acked.clear();
    } else if (kind == event::kLabRefill || kind == event::kStackGrow) {
      heapActivity(e);
    } else if (kind == event::kSpawn) {
      heapActivity(e);
      ++live;
      out.stats.maxLive = std::max(out.stats.maxLive, live);
      if (maxThreads && (live > *maxThreads || f.value("live", std::uint64_t{0}) > *maxThreads)) {
        violation(e, "thread-cap", std::to_string(live) + " live threads exceed the cap of " + std::to_string(*maxThreads));
      }
      pushReady(e, f["tid"].get<std::uint64_t>(), f["prio"].get<int>());
      refreshPending(e);
    } else if (kind == event::kPreempt || kind == event::kYield) {
      checkLatency(e);
      running.erase(e.worker);
      pendingSince.erase(e.worker);
      pushReady(e, f["tid"].get<std::uint64_t>(), f["prio"].get<int>());
      refreshPending(e);
    } else if (kind == event::kExit) {
      checkLatency(e);
      running.erase(e.worker);
      pendingSince.erase(e.worker);
      if (live == 0) violation(e, "thread-cap", "exit with no live threads");
      else --live;
    } else if (kind == event::kDispatch) {
      onDispatch(e);
    }
  }

  void onDispatch(const TraceEvent& e) {
    ++out.stats.dispatches;
    const auto& f = e.fields;
    const auto tid = f["tid"].get<std::uint64_t>();
    const int prio = f["prio"].get<int>();
    auto rp = readyPrio.find(tid);
    if (rp == readyPrio.end()) {
      violation(e, "fifo", "dispatched thread " + std::to_string(tid) + " was not ready");
      running[e.worker] = prio;
      refreshPending(e);
      return;
    }
    auto& level = ready[rp->second];
    if (f.value("directed", false)) {
      level.erase(std::find(level.begin(), level.end(), tid));
    } else {
      const int top = topReady();
      if (prio < top) {
        violation(e, "dispatch-priority",
                  "dispatched priority " + std::to_string(prio) + " while priority " + std::to_string(top) + " was ready");
      }
      if (level.front() != tid) {
        violation(e, "fifo",
                  "dispatched thread " + std::to_string(tid) + " ahead of thread " + std::to_string(level.front()));
        level.erase(std::find(level.begin(), level.end(), tid));
      } else {
        level.pop_front();
      }
    }
    readyPrio.erase(rp);
    running[e.worker] = prio;
    refreshPending(e);
  }

  void finish() {
    if (!sawError && phase != GcPhase::Idle) {
      out.violations.push_back("[gc-protocol] trace ends inside a collection");
    }
  }
};

}  // namespace

AuditResult auditTrace(const std::vector<TraceEvent>& events, const AuditOptions& opts) {
  Auditor a(opts);
  for (const auto& e : events) {
    try {
      a.onEvent(e);
    } catch (const nlohmann::json::exception& ex) {
      a.violation(e, "format", std::string("malformed ") + e.kind + " event: " + ex.what());
    }
  }
  a.finish();
  return std::move(a.out);
}

}  // namespace greenrt
