#include <doctest.h>

#include <random>

#include "greenrt/collector.hpp"
#include "greenrt/error.hpp"
#include "greenrt/heap.hpp"
#include "greenrt/shadow.hpp"

using namespace greenrt;

namespace {

namespace sl = stack_layout;

struct Fixture {
  ShadowGraph shadow;
  Heap heap;
  Collector collector;

  explicit Fixture(std::uint64_t words = 4096, std::uint64_t lab = 64)
      : heap(HeapConfig{words, lab, 1, true}), collector(heap) {
    heap.setObserver(&shadow);
  }

  ObjectRef node(std::uint32_t size, Word mask) { return heap.alloc(0, size, mask, ObjectKind::Plain); }

  // Stack whose frames each hold one reference in slot 0 and a raw word in slot 1.
  ObjectRef stackWithFrames(const std::vector<ObjectRef>& refs, Word rawValue) {
    const std::uint32_t frameWords = sl::kFrameHeader + 2;
    const auto top = static_cast<std::uint32_t>(refs.size() * frameWords);
    ObjectRef st = heap.alloc(0, top + sl::kFrames + 4, 0, ObjectKind::Stack);
    heap.storeRaw(st, sl::kTop, top);
    heap.storeRaw(st, sl::kFrameBase, refs.empty() ? 0 : top - frameWords);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto at = static_cast<std::uint32_t>(sl::kFrames + i * frameWords);
      heap.storeRaw(st, at + sl::kRetFn, i == 0 ? sl::kNoCaller : 0);
      heap.storeRaw(st, at + sl::kRetPc, 0);
      heap.storeRaw(st, at + sl::kSize, 2);
      heap.storeRaw(st, at + sl::kMask, 0b01);
      heap.storeRef(st, at + sl::kFrameHeader, refs[i]);
      heap.storeRaw(st, at + sl::kFrameHeader + 1, rawValue);
    }
    return st;
  }
};

}  // namespace

TEST_CASE("no roots: everything is garbage") {
  Fixture f;
  for (int i = 0; i < 50; ++i) f.node(4, 0b11);
  CollectionReport r = f.collector.collect([](Collector&) {});
  CHECK(r.liveWords == 0);
  CHECK(r.copiedObjects == 0);
  CHECK(f.heap.globalFrontier() == 0);
  CHECK(f.heap.cursor(0) == AllocationCursor{0, 0});
}

TEST_CASE("a root chain is copied breadth-first and rewritten") {
  Fixture f;
  f.node(3, 0);  // garbage in front of the chain
  ObjectRef a = f.node(2, 0b1);
  ObjectRef b = f.node(2, 0b1);
  ObjectRef c = f.node(2, 0);
  f.heap.writeField(a, 0, Value::ref(b));
  f.heap.writeField(b, 0, Value::ref(c));
  f.heap.writeField(c, 1, Value::raw(99));
  CollectionReport r = f.collector.collect([&](Collector& col) { a = col.forwardRef(a); });
  CHECK(r.liveWords == 9);
  CHECK(r.copiedObjects == 3);
  ObjectRef nb = f.heap.readField(a, 0).asRef();
  ObjectRef nc = f.heap.readField(nb, 0).asRef();
  CHECK(a.offset() == 0);
  CHECK(nb.offset() == 3);
  CHECK(nc.offset() == 6);
  CHECK(f.collector.lastCopyOrder() == std::vector<std::uint32_t>{0, 3, 6});
  CHECK(f.heap.readField(nc, 1) == Value::raw(99));
}

TEST_CASE("forwardRef: null, idempotence, aliasing") {
  Fixture f;
  ObjectRef x = f.node(2, 0);
  ObjectRef holder = f.node(2, 0b11);
  f.heap.writeField(holder, 0, Value::ref(x));
  f.heap.writeField(holder, 1, Value::ref(x));
  ObjectRef first;
  ObjectRef second;
  ObjectRef nullOut = ObjectRef(5);
  f.collector.collect([&](Collector& col) {
    nullOut = col.forwardRef(ObjectRef::null());
    first = col.forwardRef(x);
    second = col.forwardRef(x);
    holder = col.forwardRef(holder);
  });
  CHECK(nullOut.isNull());
  CHECK(first == second);
  CHECK(f.heap.readField(holder, 0).asRef() == first);
  CHECK(f.heap.readField(holder, 1).asRef() == first);
  CHECK(f.collector.history().back().copiedObjects == 2);
}

TEST_CASE("a reference outside from-space is fatal") {
  Fixture f(256, 32);
  f.node(2, 0);
  bool threw = false;
  try {
    f.collector.collect([&](Collector& col) { col.forwardRef(ObjectRef(100000)); });
  } catch (const Error& e) {
    threw = e.kind() == ErrorKind::Fatal;
  }
  CHECK(threw);
}

TEST_CASE("stack with no frames is left alone") {
  Fixture f;
  ObjectRef st = f.stackWithFrames({}, 0);
  f.collector.collect([&](Collector& col) { st = col.forwardRef(st); });
  CHECK(f.heap.load(st, sl::kTop) == 0);
  CHECK(f.collector.history().back().copiedObjects == 1);
}

TEST_CASE("frame masks select which slots are forwarded") {
  Fixture f;
  f.node(5, 0);
  ObjectRef x = f.node(2, 0);
  f.heap.writeField(x, 0, Value::raw(1234));
  ObjectRef st = f.stackWithFrames({x}, 42);
  f.collector.collect([&](Collector& col) { st = col.forwardRef(st); });
  const std::uint32_t slot0 = sl::kFrames + sl::kFrameHeader;
  ObjectRef nx = ObjectRef::fromWord(f.heap.load(st, slot0));
  CHECK(nx != x);
  CHECK(f.heap.readField(nx, 0) == Value::raw(1234));
  CHECK(f.heap.load(st, slot0 + 1) == 42);
}

TEST_CASE("deep stack keeps every frame's object; skipping frames loses them") {
  for (bool mutate : {false, true}) {
    CAPTURE(mutate);
    Fixture f(1 << 15, 64);
    std::vector<ObjectRef> objs;
    for (int i = 0; i < 512; ++i) {
      objs.push_back(f.node(1, 0));
      f.heap.writeField(objs.back(), 0, Value::raw(static_cast<Word>(i)));
    }
    ObjectRef st = f.stackWithFrames(objs, 7);
    f.shadow.setExternalRoot(0, f.heap.serialOf(st));
    f.collector.setIgnoreFrameMasks(mutate);
    f.collector.collect([&](Collector& col) { st = col.forwardRef(st); });
    auto problems = f.shadow.compare(f.heap);
    if (mutate) {
      CHECK(f.collector.history().back().copiedObjects == 1);
      CHECK_FALSE(problems.empty());
    } else {
      CHECK(f.collector.history().back().copiedObjects == 513);
      CHECK(problems.empty());
    }
  }
}

TEST_CASE("random graphs match the shadow reachability oracle") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    Fixture f(1 << 14, 128);
    std::vector<ObjectRef> objs;
    for (int i = 0; i < 1000; ++i) {
      const std::uint32_t size = 1 + static_cast<std::uint32_t>(rng() % 6);
      const Word mask = rng() & ((Word{1} << size) - 1);
      objs.push_back(f.node(size, mask));
    }
    for (int e = 0; e < 2000; ++e) {
      ObjectRef from = objs[rng() % objs.size()];
      ObjectHeader h = f.heap.header(from);
      const auto slot = static_cast<std::uint32_t>(rng() % h.sizeWords);
      if ((h.refMask >> slot) & 1u) f.heap.writeField(from, slot, Value::ref(objs[rng() % objs.size()]));
      else f.heap.writeField(from, slot, Value::raw(rng()));
    }
    std::vector<ObjectRef> roots;
    for (int r = 0; r < 20; ++r) {
      roots.push_back(objs[rng() % objs.size()]);
      f.shadow.setExternalRoot(static_cast<std::uint64_t>(r), f.heap.serialOf(roots.back()));
    }
    CollectionReport rep = f.collector.collect([&](Collector& col) {
      for (auto& r : roots) r = col.forwardRef(r);
    });
    auto problems = f.shadow.compare(f.heap);
    for (const auto& p : problems) MESSAGE(p);
    CHECK(problems.empty());
    CHECK(rep.liveWords == f.shadow.reachableWords());
    CHECK(f.heap.audit().empty());
  }
}
