#include "greenrt/collector.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "greenrt/error.hpp"

namespace greenrt {

Collector::Collector(Heap& heap) : heap_(heap) {}

CollectionReport Collector::collect(const RootVisitor& roots) {
  if (inProgress_) fail(ErrorKind::Fatal, "collection re-entered");
  inProgress_ = true;
  const int fromIdx = heap_.active_;
  const int toIdx = fromIdx ^ 1;
  from_ = heap_.spaces_[fromIdx].data();
  to_ = heap_.spaces_[toIdx].data();
  {
    std::lock_guard<std::mutex> lock(heap_.refillMu_);
    fromLimit_ = heap_.frontier_;
  }
  alloc_ = 0;
  copied_ = 0;
  copyOrder_.clear();

  try {
    if (roots) roots(*this);
    std::uint64_t scan = 0;
    while (scan < alloc_) {
      auto offset = static_cast<std::uint32_t>(scan);
      scanObject(offset);
      scan += 1 + header_word::size(to_[offset]);
    }
  } catch (...) {
    inProgress_ = false;
    throw;
  }

  CollectionReport report;
  report.index = history_.size() + 1;
  report.liveWords = alloc_;
  report.copiedObjects = copied_;
  report.fromSpaceWords = fromLimit_;
  heap_.flip(alloc_);
  inProgress_ = false;
  history_.push_back(report);
  return report;
}

ObjectRef Collector::forwardRef(ObjectRef ref) {
  if (!inProgress_) fail(ErrorKind::Fatal, "forwardRef outside a collection");
  if (ref.isNull()) return ref;
  const std::uint32_t off = ref.offset();
  if (off >= fromLimit_) {
    fail(ErrorKind::Fatal, "reference " + std::to_string(off) + " lies outside from-space [0," +
                               std::to_string(fromLimit_) + ")");
  }
  Word h = from_[off];
  if (header_word::isForwarded(h)) return ObjectRef(header_word::forwardOffset(h));
  const std::uint64_t words = std::uint64_t{1} + header_word::size(h);
  if (off + words > fromLimit_) fail(ErrorKind::Fatal, "object at " + std::to_string(off) + " overruns from-space");
  if (alloc_ + words > heap_.totalWords_) fail(ErrorKind::Fatal, "to-space overflow");
  const auto newOff = static_cast<std::uint32_t>(alloc_);
  std::memcpy(to_ + newOff, from_ + off, words * sizeof(Word));
  alloc_ += words;
  ++copied_;
  copyOrder_.push_back(newOff);
  from_[off] = header_word::encodeForward(newOff);
  if (heap_.trackIdentity_) {
    const int fromIdx = heap_.active_;
    heap_.identity_[fromIdx ^ 1][newOff] = heap_.identity_[fromIdx][off];
  }
  return ObjectRef(newOff);
}

void Collector::forwardSlot(Word& slot) {
  if (slot == kNullWord) return;
  slot = forwardRef(ObjectRef::fromWord(slot)).toWord();
}

void Collector::scanObject(std::uint32_t offset) {
  Word h = to_[offset];
  switch (header_word::kind(h)) {
    case ObjectKind::Plain: {
      Word mask = heap_.refMaskById(header_word::maskId(h));
      const std::uint32_t size = header_word::size(h);
      while (mask != 0) {
        auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
        mask &= mask - 1;
        if (i >= size) fail(ErrorKind::Fatal, "reference mask exceeds object size");
        forwardSlot(to_[offset + 1 + i]);
      }
      break;
    }
    case ObjectKind::Stack:
      scanStackFrames(ObjectRef(offset));
      break;
    case ObjectKind::RawData:
      break;
    default:
      fail(ErrorKind::Fatal, "forwarding word found in to-space at " + std::to_string(offset));
  }
}

void Collector::scanStackFrames(ObjectRef stack) {
  if (ignoreFrameMasks_) return;
  namespace sl = stack_layout;
  Word* payload = to_ + stack.offset() + 1;
  const std::uint32_t capacity = header_word::size(to_[stack.offset()]);
  const Word top = payload[sl::kTop];
  if (top + sl::kFrames > capacity) fail(ErrorKind::Fatal, "stackTop beyond stack capacity");
  std::uint64_t f = 0;
  while (f < top) {
    Word* frame = payload + sl::kFrames + f;
    const Word size = frame[sl::kSize];
    Word mask = frame[sl::kMask];
    if (f + sl::kFrameHeader + size > top) fail(ErrorKind::Fatal, "frame overruns stackTop");
    if (size < 64 && (mask >> size) != 0) fail(ErrorKind::Fatal, "frame mask exceeds frame size");
    while (mask != 0) {
      auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
      mask &= mask - 1;
      forwardSlot(frame[sl::kFrameHeader + i]);
    }
    f += sl::kFrameHeader + size;
  }
}

}  // namespace greenrt
