#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "greenrt/heap.hpp"

namespace greenrt {

/// Test-mode mirror of the object graph, keyed by identity serials. It is
/// fed by heap mutation callbacks and root updates, never by the collector,
/// so its reachability answer is independent of the copying code.
class ShadowGraph : public HeapObserver {
 public:
  struct Node {
    ObjectKind kind = ObjectKind::Plain;
    /// Raw words, or target serials (0 = null) where isRef is set.
    std::vector<Word> words;
    std::vector<std::uint8_t> isRef;
  };

  void onAlloc(std::uint64_t serial, ObjectKind kind, std::uint32_t sizeWords, Word refMask) override;
  void onStoreRaw(std::uint64_t serial, std::uint32_t idx, Word value) override;
  void onStoreRef(std::uint64_t serial, std::uint32_t idx, std::uint64_t target) override;
  void onStackTruncate(std::uint64_t serial, std::uint32_t fromIdx) override;

  void setThreadRoot(std::uint32_t tid, std::uint64_t stackSerial);
  void clearThreadRoot(std::uint32_t tid);
  void setGlobalRoot(int row, std::uint32_t idx, std::uint64_t serial);
  /// Extra roots for direct heap tests.
  void setExternalRoot(std::uint64_t key, std::uint64_t serial);

  std::set<std::uint64_t> reachable() const;
  /// Words a collection should retain: sum of (1 + size) over reachable nodes.
  std::uint64_t reachableWords() const;

  /// Compares the heap's compacted live region against the mirror: the set
  /// of objects, their kinds and sizes, raw payloads, and reference edges.
  std::vector<std::string> compare(const Heap& heap) const;

  /// Forgets nodes no longer reachable.
  void prune();

  std::size_t nodeCount() const;

 private:
  std::set<std::uint64_t> reachableLocked() const;

  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, Node> nodes_;
  std::map<std::uint32_t, std::uint64_t> threadRoots_;
  std::map<std::pair<int, std::uint32_t>, std::uint64_t> globalRoots_;
  std::map<std::uint64_t, std::uint64_t> externalRoots_;
};

}  // namespace greenrt
