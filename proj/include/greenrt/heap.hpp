#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace greenrt {

class TraceSink;
class Collector;

using Word = std::uint64_t;

/// Slot value of a null reference.
inline constexpr Word kNullWord = ~Word{0};

/// Word offset of an object header in the active semispace.
class ObjectRef {
 public:
  static constexpr std::uint32_t kNullOffset = UINT32_MAX;

  constexpr ObjectRef() = default;
  constexpr explicit ObjectRef(std::uint32_t offset) : offset_(offset) {}

  static constexpr ObjectRef null() { return ObjectRef(); }
  static constexpr ObjectRef fromWord(Word w) {
    return w == kNullWord ? ObjectRef() : ObjectRef(static_cast<std::uint32_t>(w));
  }

  constexpr bool isNull() const { return offset_ == kNullOffset; }
  constexpr std::uint32_t offset() const { return offset_; }
  constexpr Word toWord() const { return isNull() ? kNullWord : Word{offset_}; }

  constexpr bool operator==(const ObjectRef&) const = default;

 private:
  std::uint32_t offset_ = kNullOffset;
};

enum class ObjectKind : std::uint8_t { Plain = 0, Stack = 1, RawData = 2 };

inline constexpr std::uint32_t kMaxPlainSlots = 64;

struct ObjectHeader {
  ObjectKind kind = ObjectKind::Plain;
  std::uint32_t sizeWords = 0;
  Word refMask = 0;
};

/// A payload slot value tagged with whether it holds a reference.
struct Value {
  Word bits = 0;
  bool isRef = false;

  static Value raw(Word w) { return {w, false}; }
  static Value ref(ObjectRef r) { return {r.toWord(), true}; }
  ObjectRef asRef() const { return ObjectRef::fromWord(bits); }
  bool operator==(const Value&) const = default;
};

struct HeapConfig {
  std::uint64_t totalWords = 0;
  std::uint64_t labWords = 0;
  int numWorkers = 1;
  /// Keeps a serial number per object so tests can follow identity across
  /// collections.
  bool trackIdentity = false;
};

/// Per-worker bump region carved out of the global frontier.
struct AllocationCursor {
  std::uint32_t frontier = 0;
  std::uint32_t limit = 0;

  bool operator==(const AllocationCursor&) const = default;
};

/// Receives every heap mutation when installed. Serial 0 means null.
class HeapObserver {
 public:
  virtual ~HeapObserver() = default;
  virtual void onAlloc(std::uint64_t serial, ObjectKind kind, std::uint32_t sizeWords, Word refMask) = 0;
  virtual void onStoreRaw(std::uint64_t serial, std::uint32_t idx, Word value) = 0;
  virtual void onStoreRef(std::uint64_t serial, std::uint32_t idx, std::uint64_t target) = 0;
  /// Payload slots at and above `fromIdx` of a stack object are dead.
  virtual void onStackTruncate(std::uint64_t serial, std::uint32_t fromIdx) = 0;
};

/// Stack object payload: [stackTop, frameBase, frames...]. Frame offsets are
/// relative to the start of the frame region. Each frame is
/// [returnFunction, returnIndex, frameSizeWords, frameRefMask, slots...].
namespace stack_layout {
inline constexpr std::uint32_t kTop = 0;
inline constexpr std::uint32_t kFrameBase = 1;
inline constexpr std::uint32_t kFrames = 2;
inline constexpr std::uint32_t kFrameHeader = 4;
inline constexpr std::uint32_t kRetFn = 0;
inline constexpr std::uint32_t kRetPc = 1;
inline constexpr std::uint32_t kSize = 2;
inline constexpr std::uint32_t kMask = 3;
/// returnFunction of a thread's bottom frame.
inline constexpr Word kNoCaller = ~Word{0};
}  // namespace stack_layout

/// Header word: bits 0-1 kind (3 = forwarded), bits 2-33 size or forwarding
/// offset, bits 34-63 interned reference-mask id.
namespace header_word {
inline constexpr Word kForwardedTag = 3;
Word encode(ObjectKind kind, std::uint32_t sizeWords, std::uint32_t maskId);
Word encodeForward(std::uint32_t newOffset);
inline bool isForwarded(Word h) { return (h & 3) == kForwardedTag; }
inline ObjectKind kind(Word h) { return static_cast<ObjectKind>(h & 3); }
inline std::uint32_t size(Word h) { return static_cast<std::uint32_t>((h >> 2) & 0xffffffffu); }
inline std::uint32_t forwardOffset(Word h) { return size(h); }
inline std::uint32_t maskId(Word h) { return static_cast<std::uint32_t>(h >> 34); }
}  // namespace header_word

/// Shared managed heap: two equal semispaces, per-worker local allocation
/// buffers refilled from one global frontier.
class Heap {
 public:
  /// Called when a refill fails. Must not return until a collection has
  /// completed (or the run is aborting).
  using CollectionTrigger = std::function<void(int worker)>;

  explicit Heap(const HeapConfig& cfg);

  Heap(const Heap&) = delete;
  Heap& operator=(const Heap&) = delete;

  void setCollectionTrigger(CollectionTrigger trigger) { trigger_ = std::move(trigger); }
  void setObserver(HeapObserver* observer) { observer_ = observer; }
  void setTrace(TraceSink* trace) { trace_ = trace; }

  /// Bump-allocates with ref slots set to null and raw slots to 0. Triggers a
  /// collection and retries once when the global space is exhausted; throws
  /// OutOfMemory if that is still not enough.
  ObjectRef alloc(int worker, std::uint32_t sizeWords, Word refMask, ObjectKind kind);
  std::optional<ObjectRef> tryAlloc(int worker, std::uint32_t sizeWords, Word refMask, ObjectKind kind);

  /// Field access for plain and rawdata objects. Throws FieldError on a bad
  /// index and TypeError when a reference lands in a non-reference slot (or
  /// the reverse).
  Value readField(ObjectRef obj, std::uint32_t idx) const;
  void writeField(ObjectRef obj, std::uint32_t idx, Value v);

  // Unchecked payload access used by the thread system for stack frames.
  Word load(ObjectRef obj, std::uint32_t idx) const;
  void storeRaw(ObjectRef obj, std::uint32_t idx, Word v);
  void storeRef(ObjectRef obj, std::uint32_t idx, ObjectRef target);
  void truncateStack(ObjectRef stack, std::uint32_t fromIdx);

  ObjectHeader header(ObjectRef obj) const;
  /// True when `obj` names an object start in the active space (slow; audits).
  bool isValidRef(ObjectRef obj) const;

  std::uint64_t totalWords() const { return totalWords_; }
  std::uint64_t labWords() const { return labWords_; }
  int numWorkers() const { return static_cast<int>(cursors_.size()); }
  std::uint64_t globalFrontier() const;
  AllocationCursor cursor(int worker) const { return cursors_[worker].c; }
  /// Sum of all LAB refills (including direct large-object grabs) since the
  /// last collection.
  std::uint64_t refilledWords() const;
  std::uint64_t labRefills() const { return labRefills_.load(); }
  /// End of the compacted live data left by the last collection.
  std::uint64_t liveWordsAfterLastCollection() const { return lastLiveWords_; }

  /// Called by a worker after it resumes from a collection pause. Clears a
  /// stale cursor so the next allocation refills.
  void revalidateLab(int worker);
  std::uint64_t labRevalidations() const { return labRevalidations_.load(); }

  bool tracksIdentity() const { return trackIdentity_; }
  /// Identity serial of `obj` (0 for null or when identity is off).
  std::uint64_t serialOf(ObjectRef obj) const;

  Word refMaskById(std::uint32_t id) const;
  std::uint32_t internMask(Word mask);

  /// Walks the compacted region left by the last collection and checks that
  /// every reference slot names a valid object start. Returns violations.
  std::vector<std::string> audit() const;

  /// Visits every object in [0, liveWordsAfterLastCollection()).
  void forEachLiveObject(const std::function<void(ObjectRef, const ObjectHeader&)>& fn) const;

 private:
  friend class Collector;

  struct alignas(64) PaddedCursor {
    AllocationCursor c;
    std::uint64_t epoch = 0;
  };

  Word* space() { return spaces_[active_].data(); }
  const Word* space() const { return spaces_[active_].data(); }
  Word atomicLoad(std::uint32_t idx) const;
  void atomicStore(std::uint32_t idx, Word v);
  void checkObject(ObjectRef obj) const;
  void initObject(std::uint32_t offset, std::uint32_t sizeWords, Word refMask, ObjectKind kind, std::uint32_t maskId);

  // Collector interface.
  void flip(std::uint64_t liveWords);

  std::uint64_t totalWords_;
  std::uint64_t labWords_;
  std::vector<Word> spaces_[2];
  int active_ = 0;

  mutable std::mutex refillMu_;
  std::uint64_t frontier_ = 0;
  std::uint64_t refilled_ = 0;
  std::uint64_t lastLiveWords_ = 0;
  std::uint64_t epoch_ = 0;
  std::vector<PaddedCursor> cursors_;
  std::atomic<std::uint64_t> labRefills_{0};
  std::atomic<std::uint64_t> labRevalidations_{0};

  mutable std::shared_mutex maskMu_;
  std::vector<Word> masks_;
  std::unordered_map<Word, std::uint32_t> maskIds_;

  bool trackIdentity_;
  std::vector<std::uint64_t> identity_[2];
  std::atomic<std::uint64_t> nextSerial_{1};

  CollectionTrigger trigger_;
  HeapObserver* observer_ = nullptr;
  TraceSink* trace_ = nullptr;
};

}  // namespace greenrt
