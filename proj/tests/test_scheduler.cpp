#include <doctest.h>

#include <atomic>
#include <chrono>
#include <deque>
#include <map>
#include <random>
#include <thread>

#include "greenrt/error.hpp"
#include "greenrt/scheduler.hpp"
#include "greenrt/trace.hpp"

using namespace greenrt;
using namespace std::chrono_literals;

namespace {

Scheduler::Options opts(int workers = 1, std::uint64_t quantum = 100) {
  Scheduler::Options o;
  o.maxPrio = 7;
  o.numWorkers = workers;
  o.quantumPolls = quantum;
  return o;
}

}  // namespace

TEST_CASE("highest level first") {
  Scheduler s(opts());
  s.enqueue(1, 2);  // A
  s.enqueue(2, 1);  // B
  CHECK(s.pickNext(0) == Tid{1});
  CHECK(s.pickNext(0) == Tid{2});
  CHECK_FALSE(s.pickNext(0).has_value());
}

TEST_CASE("FIFO within a level; a requeued thread goes to the tail") {
  Scheduler s(opts());
  s.enqueue(2, 1);  // B
  s.enqueue(3, 1);  // C
  Tid b = *s.pickNext(0);
  CHECK(b == 2);
  CHECK(s.switchAway(0, b, 1, event::kYield) == Tid{3});
  CHECK(s.pickNext(0) == Tid{2});
}

TEST_CASE("enqueueing a queued thread is a protocol error") {
  Scheduler s(opts());
  s.enqueue(1, 3);
  bool threw = false;
  try {
    s.enqueue(1, 3);
  } catch (const Error& e) {
    threw = e.kind() == ErrorKind::Protocol;
  }
  CHECK(threw);
}

TEST_CASE("priorities out of range are rejected") {
  ReadyQueues q(3);
  bool threw = false;
  try {
    q.push(1, 4);
  } catch (const Error& e) {
    threw = e.kind() == ErrorKind::Protocol;
  }
  CHECK(threw);
}

TEST_CASE("randomized enqueue and pick against a model queue") {
  std::mt19937_64 rng(42);
  Scheduler s(opts());
  std::map<int, std::deque<Tid>> model;
  Tid next = 1;
  for (int step = 0; step < 20000; ++step) {
    if (rng() % 3 != 0) {
      const int prio = static_cast<int>(rng() % 8);
      s.enqueue(next, prio);
      model[prio].push_back(next);
      ++next;
    } else {
      auto got = s.pickNext(0);
      std::optional<Tid> want;
      for (auto it = model.rbegin(); it != model.rend(); ++it) {
        if (!it->second.empty()) {
          want = it->second.front();
          it->second.pop_front();
          break;
        }
      }
      REQUIRE(got == want);
    }
  }
}

TEST_CASE("budget exhaustion with an equal-priority peer reschedules") {
  Scheduler s(opts(1, 100));
  s.enqueue(1, 3);
  s.enqueue(2, 3);
  REQUIRE(s.pickNext(0) == Tid{1});
  s.startQuantum(0);
  // The resume poll is free; then 99 more polls fit in the quantum of 100.
  for (int i = 0; i < 100; ++i) REQUIRE(s.preemptCheck(0, 3) == PreemptDecision::Continue);
  CHECK(s.preemptCheck(0, 3) == PreemptDecision::Reschedule);
}

TEST_CASE("a one-poll quantum still lets each thread past its resume point") {
  Scheduler s(opts(1, 1));
  s.enqueue(1, 3);
  s.enqueue(2, 3);
  REQUIRE(s.pickNext(0) == Tid{1});
  s.startQuantum(0);
  CHECK(s.preemptCheck(0, 3) == PreemptDecision::Continue);
  CHECK(s.preemptCheck(0, 3) == PreemptDecision::Reschedule);
  CHECK(s.switchAway(0, 1, 3, event::kPreempt) == Tid{2});
  s.startQuantum(0);
  CHECK(s.preemptCheck(0, 3) == PreemptDecision::Continue);
}

TEST_CASE("a higher-priority arrival preempts at the next poll") {
  Scheduler s(opts(1, 100));
  s.enqueue(1, 2);
  REQUIRE(s.pickNext(0) == Tid{1});
  s.startQuantum(0);
  CHECK(s.preemptCheck(0, 2) == PreemptDecision::Continue);
  s.enqueue(2, 5);
  CHECK(s.preemptCheck(0, 2) == PreemptDecision::Reschedule);
}

TEST_CASE("no peers: keep running and reset the budget") {
  Scheduler s(opts(1, 10));
  s.enqueue(1, 4);
  s.enqueue(2, 1);  // lower priority never forces a switch
  REQUIRE(s.pickNext(0) == Tid{1});
  s.startQuantum(0);
  for (int i = 0; i < 1000; ++i) REQUIRE(s.preemptCheck(0, 4) == PreemptDecision::Continue);
  CHECK(s.polls(0) == 1000);
}

TEST_CASE("enqueue wakes exactly one idle worker; shutdown wakes all") {
  Scheduler s(opts(3));
  std::atomic<int> got{0};
  std::atomic<int> none{0};
  std::vector<std::thread> ws;
  for (int w = 0; w < 3; ++w) {
    ws.emplace_back([&, w] {
      if (s.waitForWork(w)) got.fetch_add(1);
      else none.fetch_add(1);
    });
  }
  while (s.idleWorkers() < 3) std::this_thread::sleep_for(1ms);
  s.enqueue(1, 0);
  while (got.load() < 1) std::this_thread::sleep_for(1ms);
  std::this_thread::sleep_for(20ms);
  CHECK(got.load() == 1);
  CHECK(s.wakeups() == 1);
  CHECK(s.idleWorkers() == 2);
  s.shutdown();
  for (auto& t : ws) t.join();
  CHECK(none.load() == 2);
}

TEST_CASE("stall handler runs when every worker is idle with nothing ready") {
  Scheduler s(opts(2));
  std::atomic<int> stalls{0};
  s.setStallHandler([&] {
    stalls.fetch_add(1);
    s.shutdownLocked();
  });
  std::thread a([&] { s.waitForWork(0); });
  std::thread b([&] { s.waitForWork(1); });
  a.join();
  b.join();
  CHECK(stalls.load() == 1);
}

TEST_CASE("dispatch and requeue events carry poll counts") {
  TraceSink trace;
  Scheduler s(opts(), &trace);
  s.enqueue(1, 2);
  s.enqueue(2, 2);
  s.pickNext(0);
  s.preemptCheck(0, 2);
  s.switchAway(0, 1, 2, event::kPreempt);
  auto ev = trace.snapshot();
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].kind == event::kDispatch);
  CHECK(ev[1].kind == event::kPreempt);
  CHECK(ev[1].fields["polls"] == 1);
  CHECK(ev[1].fields["snapshot"] == nlohmann::json::array({1}));
  CHECK(ev[2].kind == event::kDispatch);
  CHECK(ev[2].fields["tid"] == 2);
  CHECK(s.preemptions() == 1);
}
