#include "greenrt/heap.hpp"

#include <algorithm>
#include <bit>
#include <unordered_set>

#include "greenrt/error.hpp"
#include "greenrt/trace.hpp"

namespace greenrt {

namespace header_word {

Word encode(ObjectKind kind, std::uint32_t sizeWords, std::uint32_t maskId) {
  return static_cast<Word>(kind) | (static_cast<Word>(sizeWords) << 2) | (static_cast<Word>(maskId) << 34);
}

Word encodeForward(std::uint32_t newOffset) { return kForwardedTag | (static_cast<Word>(newOffset) << 2); }

}  // namespace header_word

Heap::Heap(const HeapConfig& cfg)
    : totalWords_(cfg.totalWords), labWords_(cfg.labWords), trackIdentity_(cfg.trackIdentity) {
  if (cfg.totalWords == 0) fail(ErrorKind::Config, "heap totalWords must be positive");
  if (cfg.labWords == 0) fail(ErrorKind::Config, "heap labWords must be positive");
  if (cfg.labWords > cfg.totalWords) fail(ErrorKind::Config, "heap labWords exceeds totalWords");
  if (cfg.totalWords >= ObjectRef::kNullOffset) fail(ErrorKind::Config, "heap totalWords overflows 32-bit offsets");
  if (cfg.numWorkers < 1) fail(ErrorKind::Config, "heap needs at least one worker");
  spaces_[0].assign(totalWords_, 0);
  spaces_[1].assign(totalWords_, 0);
  cursors_.resize(static_cast<std::size_t>(cfg.numWorkers));
  masks_.push_back(0);
  maskIds_.emplace(0, 0);
  if (trackIdentity_) {
    identity_[0].assign(totalWords_, 0);
    identity_[1].assign(totalWords_, 0);
  }
}

Word Heap::atomicLoad(std::uint32_t idx) const {
  return std::atomic_ref<Word>(const_cast<Word&>(space()[idx])).load(std::memory_order_acquire);
}

void Heap::atomicStore(std::uint32_t idx, Word v) {
  std::atomic_ref<Word>(space()[idx]).store(v, std::memory_order_release);
}

std::uint32_t Heap::internMask(Word mask) {
  {
    std::shared_lock<std::shared_mutex> lock(maskMu_);
    auto it = maskIds_.find(mask);
    if (it != maskIds_.end()) return it->second;
  }
  std::unique_lock<std::shared_mutex> lock(maskMu_);
  auto it = maskIds_.find(mask);
  if (it != maskIds_.end()) return it->second;
  if (masks_.size() >= (1u << 30)) fail(ErrorKind::Fatal, "reference mask table exhausted");
  auto id = static_cast<std::uint32_t>(masks_.size());
  masks_.push_back(mask);
  maskIds_.emplace(mask, id);
  return id;
}

Word Heap::refMaskById(std::uint32_t id) const {
  std::shared_lock<std::shared_mutex> lock(maskMu_);
  return masks_.at(id);
}

std::uint64_t Heap::globalFrontier() const {
  std::lock_guard<std::mutex> lock(refillMu_);
  return frontier_;
}

std::uint64_t Heap::refilledWords() const {
  std::lock_guard<std::mutex> lock(refillMu_);
  return refilled_;
}

void Heap::initObject(std::uint32_t offset, std::uint32_t sizeWords, Word refMask, ObjectKind kind,
                      std::uint32_t maskId) {
  Word* base = space() + offset;
  for (std::uint32_t i = 0; i < sizeWords; ++i) {
    bool isRef = kind == ObjectKind::Plain && i < 64 && ((refMask >> i) & 1u);
    base[1 + i] = isRef ? kNullWord : 0;
  }
  atomicStore(offset, header_word::encode(kind, sizeWords, maskId));
  std::uint64_t serial = 0;
  if (trackIdentity_) {
    serial = nextSerial_.fetch_add(1);
    identity_[active_][offset] = serial;
  }
  if (observer_ != nullptr) observer_->onAlloc(serial, kind, sizeWords, refMask);
}

std::optional<ObjectRef> Heap::tryAlloc(int worker, std::uint32_t sizeWords, Word refMask, ObjectKind kind) {
  if (sizeWords == 0) fail(ErrorKind::Program, "object size must be at least one word");
  if (kind == ObjectKind::Plain) {
    if (sizeWords > kMaxPlainSlots) {
      fail(ErrorKind::Program, "plain objects are limited to " + std::to_string(kMaxPlainSlots) + " slots");
    }
    if (sizeWords < 64 && (refMask >> sizeWords) != 0) {
      fail(ErrorKind::Program, "reference mask has bits beyond the object size");
    }
  } else if (refMask != 0) {
    fail(ErrorKind::Program, "only plain objects carry a header reference mask");
  }
  const std::uint64_t need = std::uint64_t{1} + sizeWords;
  if (need > totalWords_) return std::nullopt;
  const std::uint32_t maskId = kind == ObjectKind::Plain ? internMask(refMask) : 0;

  auto& slot = cursors_[worker];
  std::uint32_t offset = 0;
  if (need > labWords_) {
    // Large object: carved straight from the global frontier.
    std::lock_guard<std::mutex> lock(refillMu_);
    if (totalWords_ - frontier_ < need) return std::nullopt;
    offset = static_cast<std::uint32_t>(frontier_);
    frontier_ += need;
    refilled_ += need;
    labRefills_.fetch_add(1);
    if (trace_ != nullptr) {
      trace_->emit(worker, event::kLabRefill, {{"words", need}, {"frontier", frontier_}, {"direct", true}});
    }
  } else {
    if (slot.epoch != epoch_ || slot.c.limit - slot.c.frontier < need) {
      std::lock_guard<std::mutex> lock(refillMu_);
      std::uint64_t avail = totalWords_ - frontier_;
      if (avail < need) return std::nullopt;
      std::uint64_t take = std::min<std::uint64_t>(labWords_, avail);
      slot.c.frontier = static_cast<std::uint32_t>(frontier_);
      slot.c.limit = static_cast<std::uint32_t>(frontier_ + take);
      slot.epoch = epoch_;
      frontier_ += take;
      refilled_ += take;
      labRefills_.fetch_add(1);
      if (trace_ != nullptr) {
        trace_->emit(worker, event::kLabRefill, {{"words", take}, {"frontier", frontier_}, {"direct", false}});
      }
    }
    offset = slot.c.frontier;
    slot.c.frontier += static_cast<std::uint32_t>(need);
  }
  initObject(offset, sizeWords, refMask, kind, maskId);
  return ObjectRef(offset);
}

ObjectRef Heap::alloc(int worker, std::uint32_t sizeWords, Word refMask, ObjectKind kind) {
  if (auto r = tryAlloc(worker, sizeWords, refMask, kind)) return *r;
  while (trigger_) {
    trigger_(worker);
    if (auto r = tryAlloc(worker, sizeWords, refMask, kind)) return *r;
    // Other workers may have used up the freed space before this one ran
    // again. Only a collection nobody else allocated after is conclusive.
    std::lock_guard<std::mutex> lock(refillMu_);
    if (frontier_ <= lastLiveWords_) break;
  }
  fail(ErrorKind::OutOfMemory, "cannot allocate " + std::to_string(sizeWords + 1) + " words (heap " +
                                   std::to_string(totalWords_) + " words)");
}

void Heap::checkObject(ObjectRef obj) const {
  if (obj.isNull()) fail(ErrorKind::Field, "null object reference");
  if (obj.offset() >= totalWords_) fail(ErrorKind::Fatal, "object reference outside the heap");
}

ObjectHeader Heap::header(ObjectRef obj) const {
  checkObject(obj);
  Word h = atomicLoad(obj.offset());
  if (header_word::isForwarded(h)) fail(ErrorKind::Fatal, "mutator observed a forwarded object");
  ObjectHeader out;
  out.kind = header_word::kind(h);
  out.sizeWords = header_word::size(h);
  out.refMask = out.kind == ObjectKind::Plain ? refMaskById(header_word::maskId(h)) : 0;
  return out;
}

Value Heap::readField(ObjectRef obj, std::uint32_t idx) const {
  ObjectHeader h = header(obj);
  if (h.kind == ObjectKind::Stack) fail(ErrorKind::Type, "field access on a stack object");
  if (idx >= h.sizeWords) {
    fail(ErrorKind::Field, "slot " + std::to_string(idx) + " out of range for size " + std::to_string(h.sizeWords));
  }
  Word w = atomicLoad(obj.offset() + 1 + idx);
  bool isRef = h.kind == ObjectKind::Plain && ((h.refMask >> idx) & 1u);
  return {w, isRef};
}

void Heap::writeField(ObjectRef obj, std::uint32_t idx, Value v) {
  ObjectHeader h = header(obj);
  if (h.kind == ObjectKind::Stack) fail(ErrorKind::Type, "field access on a stack object");
  if (idx >= h.sizeWords) {
    fail(ErrorKind::Field, "slot " + std::to_string(idx) + " out of range for size " + std::to_string(h.sizeWords));
  }
  bool slotIsRef = h.kind == ObjectKind::Plain && ((h.refMask >> idx) & 1u);
  if (v.isRef && !slotIsRef) fail(ErrorKind::Type, "reference written to non-reference slot " + std::to_string(idx));
  if (!v.isRef && slotIsRef) fail(ErrorKind::Type, "raw value written to reference slot " + std::to_string(idx));
  if (v.isRef) storeRef(obj, idx, v.asRef());
  else storeRaw(obj, idx, v.bits);
}

Word Heap::load(ObjectRef obj, std::uint32_t idx) const { return atomicLoad(obj.offset() + 1 + idx); }

void Heap::storeRaw(ObjectRef obj, std::uint32_t idx, Word v) {
  atomicStore(obj.offset() + 1 + idx, v);
  if (observer_ != nullptr) observer_->onStoreRaw(serialOf(obj), idx, v);
}

void Heap::storeRef(ObjectRef obj, std::uint32_t idx, ObjectRef target) {
  atomicStore(obj.offset() + 1 + idx, target.toWord());
  if (observer_ != nullptr) observer_->onStoreRef(serialOf(obj), idx, serialOf(target));
}

void Heap::truncateStack(ObjectRef stack, std::uint32_t fromIdx) {
  if (observer_ != nullptr) observer_->onStackTruncate(serialOf(stack), fromIdx);
}

std::uint64_t Heap::serialOf(ObjectRef obj) const {
  if (!trackIdentity_ || obj.isNull()) return 0;
  return identity_[active_][obj.offset()];
}

void Heap::revalidateLab(int worker) {
  auto& slot = cursors_[worker];
  if (slot.epoch != epoch_) {
    slot.c = {};
    slot.epoch = epoch_;
  }
  labRevalidations_.fetch_add(1);
}

void Heap::flip(std::uint64_t liveWords) {
  std::lock_guard<std::mutex> lock(refillMu_);
  if (trackIdentity_) std::fill(identity_[active_].begin(), identity_[active_].end(), 0);
  active_ ^= 1;
  frontier_ = liveWords;
  refilled_ = liveWords;
  lastLiveWords_ = liveWords;
  ++epoch_;
  for (auto& c : cursors_) c.c = {};
}

void Heap::forEachLiveObject(const std::function<void(ObjectRef, const ObjectHeader&)>& fn) const {
  std::uint64_t pos = 0;
  while (pos < lastLiveWords_) {
    ObjectRef ref(static_cast<std::uint32_t>(pos));
    ObjectHeader h = header(ref);
    fn(ref, h);
    pos += 1 + h.sizeWords;
  }
}

bool Heap::isValidRef(ObjectRef obj) const {
  if (obj.isNull() || obj.offset() >= lastLiveWords_) return false;
  bool found = false;
  forEachLiveObject([&](ObjectRef r, const ObjectHeader&) { found = found || r == obj; });
  return found;
}

std::vector<std::string> Heap::audit() const {
  std::vector<std::string> problems;
  std::unordered_set<std::uint32_t> starts;
  std::uint64_t pos = 0;
  while (pos < lastLiveWords_) {
    Word h = space()[pos];
    if (header_word::isForwarded(h)) {
      problems.push_back("forwarding word in live region at " + std::to_string(pos));
      return problems;
    }
    starts.insert(static_cast<std::uint32_t>(pos));
    pos += 1 + header_word::size(h);
  }
  if (pos != lastLiveWords_) problems.push_back("live region does not tile exactly");
  auto checkSlot = [&](std::uint32_t obj, std::uint32_t idx) {
    Word w = space()[obj + 1 + idx];
    if (w == kNullWord) return;
    if (w >= totalWords_ || starts.count(static_cast<std::uint32_t>(w)) == 0) {
      problems.push_back("object " + std::to_string(obj) + " slot " + std::to_string(idx) +
                         " holds dangling reference " + std::to_string(w));
    }
  };
  for (std::uint32_t obj : starts) {
    Word h = space()[obj];
    auto kind = header_word::kind(h);
    auto size = header_word::size(h);
    if (kind == ObjectKind::Plain) {
      Word mask = refMaskById(header_word::maskId(h));
      for (std::uint32_t i = 0; i < size && i < 64; ++i) {
        if ((mask >> i) & 1u) checkSlot(obj, i);
      }
    } else if (kind == ObjectKind::Stack) {
      namespace sl = stack_layout;
      Word top = space()[obj + 1 + sl::kTop];
      std::uint64_t f = 0;
      while (f < top) {
        auto base = static_cast<std::uint32_t>(sl::kFrames + f);
        Word frameSize = space()[obj + 1 + base + sl::kSize];
        Word frameMask = space()[obj + 1 + base + sl::kMask];
        for (std::uint32_t i = 0; i < frameSize && i < 64; ++i) {
          if ((frameMask >> i) & 1u) checkSlot(obj, base + sl::kFrameHeader + i);
        }
        f += sl::kFrameHeader + frameSize;
      }
      if (f != top) problems.push_back("stack " + std::to_string(obj) + " frames do not tile stackTop");
    }
  }
  return problems;
}

}  // namespace greenrt
