#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "greenrt/heap.hpp"

namespace greenrt {

struct CollectionReport {
  std::uint64_t index = 0;  // 1-based
  std::uint64_t liveWords = 0;
  std::uint64_t copiedObjects = 0;
  std::uint64_t fromSpaceWords = 0;  // frontier before collection
  std::int64_t pauseMicros = 0;      // filled in by the caller that stopped the world
  /// Largest number of instructions any worker executed between the stop
  /// request and its acknowledgement.
  std::uint64_t safepointSpan = 0;
};

/// Stop-the-world semispace (Cheney) copying collector. Must only run while
/// every mutator is parked.
class Collector {
 public:
  /// Enumerates roots by calling forwardRef/forwardSlot on each one.
  using RootVisitor = std::function<void(Collector&)>;

  explicit Collector(Heap& heap);

  CollectionReport collect(const RootVisitor& roots);

  /// Returns the to-space copy of `ref`, copying it on first visit and leaving
  /// a forwarding word behind. Null maps to null. Only valid inside collect().
  ObjectRef forwardRef(ObjectRef ref);
  /// Forwards a slot holding an encoded reference in place.
  void forwardSlot(Word& slot);

  /// Forwards every masked slot of every frame in a to-space stack object.
  /// Raw frame slots are left untouched.
  void scanStackFrames(ObjectRef toSpaceStack);

  bool inProgress() const { return inProgress_; }
  const std::vector<CollectionReport>& history() const { return history_; }

  /// Test knob: skip frame scanning, losing everything only stacks hold.
  void setIgnoreFrameMasks(bool ignore) { ignoreFrameMasks_ = ignore; }

  /// Offsets in to-space in the order objects were copied during the last
  /// collection (breadth-first).
  const std::vector<std::uint32_t>& lastCopyOrder() const { return copyOrder_; }

 private:
  void scanObject(std::uint32_t offset);

  Heap& heap_;
  bool inProgress_ = false;
  bool ignoreFrameMasks_ = false;
  Word* from_ = nullptr;
  Word* to_ = nullptr;
  std::uint64_t fromLimit_ = 0;
  std::uint64_t alloc_ = 0;
  std::uint64_t copied_ = 0;
  std::vector<std::uint32_t> copyOrder_;
  std::vector<CollectionReport> history_;
};

}  // namespace greenrt
