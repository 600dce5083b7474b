#include "greenrt/shadow.hpp"

#include <algorithm>

namespace greenrt {

void ShadowGraph::onAlloc(std::uint64_t serial, ObjectKind kind, std::uint32_t sizeWords, Word refMask) {
  std::lock_guard<std::mutex> lock(mu_);
  Node n;
  n.kind = kind;
  n.words.assign(sizeWords, 0);
  n.isRef.assign(sizeWords, 0);
  if (kind == ObjectKind::Plain) {
    for (std::uint32_t i = 0; i < sizeWords && i < 64; ++i) n.isRef[i] = (refMask >> i) & 1u;
  }
  nodes_[serial] = std::move(n);
}

void ShadowGraph::onStoreRaw(std::uint64_t serial, std::uint32_t idx, Word value) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = nodes_.find(serial);
  if (it == nodes_.end() || idx >= it->second.words.size()) return;
  it->second.words[idx] = value;
  it->second.isRef[idx] = 0;
}

void ShadowGraph::onStoreRef(std::uint64_t serial, std::uint32_t idx, std::uint64_t target) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = nodes_.find(serial);
  if (it == nodes_.end() || idx >= it->second.words.size()) return;
  it->second.words[idx] = target;
  it->second.isRef[idx] = 1;
}

void ShadowGraph::onStackTruncate(std::uint64_t serial, std::uint32_t fromIdx) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = nodes_.find(serial);
  if (it == nodes_.end()) return;
  auto& n = it->second;
  for (std::size_t i = fromIdx; i < n.words.size(); ++i) {
    n.words[i] = 0;
    n.isRef[i] = 0;
  }
}

void ShadowGraph::setThreadRoot(std::uint32_t tid, std::uint64_t stackSerial) {
  std::lock_guard<std::mutex> lock(mu_);
  threadRoots_[tid] = stackSerial;
}

void ShadowGraph::clearThreadRoot(std::uint32_t tid) {
  std::lock_guard<std::mutex> lock(mu_);
  threadRoots_.erase(tid);
}

void ShadowGraph::setGlobalRoot(int row, std::uint32_t idx, std::uint64_t serial) {
  std::lock_guard<std::mutex> lock(mu_);
  globalRoots_[{row, idx}] = serial;
}

void ShadowGraph::setExternalRoot(std::uint64_t key, std::uint64_t serial) {
  std::lock_guard<std::mutex> lock(mu_);
  externalRoots_[key] = serial;
}

std::set<std::uint64_t> ShadowGraph::reachableLocked() const {
  std::set<std::uint64_t> seen;
  std::vector<std::uint64_t> work;
  auto push = [&](std::uint64_t s) {
    if (s != 0 && seen.insert(s).second) work.push_back(s);
  };
  for (const auto& [tid, s] : threadRoots_) push(s);
  for (const auto& [key, s] : globalRoots_) push(s);
  for (const auto& [key, s] : externalRoots_) push(s);
  while (!work.empty()) {
    std::uint64_t s = work.back();
    work.pop_back();
    auto it = nodes_.find(s);
    if (it == nodes_.end()) continue;
    const Node& n = it->second;
    for (std::size_t i = 0; i < n.words.size(); ++i) {
      if (n.isRef[i]) push(n.words[i]);
    }
  }
  return seen;
}

std::set<std::uint64_t> ShadowGraph::reachable() const {
  std::lock_guard<std::mutex> lock(mu_);
  return reachableLocked();
}

std::uint64_t ShadowGraph::reachableWords() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::uint64_t total = 0;
  for (auto s : reachableLocked()) {
    auto it = nodes_.find(s);
    if (it != nodes_.end()) total += 1 + it->second.words.size();
  }
  return total;
}

std::vector<std::string> ShadowGraph::compare(const Heap& heap) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> problems;
  auto report = [&](std::string msg) {
    if (problems.size() < 50) problems.push_back(std::move(msg));
  };
  const std::set<std::uint64_t> live = reachableLocked();

  std::unordered_map<std::uint64_t, ObjectRef> bySerial;
  std::unordered_map<std::uint32_t, std::uint64_t> serialAt;
  heap.forEachLiveObject([&](ObjectRef ref, const ObjectHeader&) {
    std::uint64_t s = heap.serialOf(ref);
    if (s == 0) {
      report("object at " + std::to_string(ref.offset()) + " has no identity");
      return;
    }
    if (!bySerial.emplace(s, ref).second) report("object #" + std::to_string(s) + " copied twice");
    serialAt[ref.offset()] = s;
  });

  for (const auto& [s, ref] : bySerial) {
    if (live.count(s) == 0) report("unreachable object #" + std::to_string(s) + " survived collection");
  }
  std::uint64_t expectedWords = 0;
  for (std::uint64_t s : live) {
    auto nodeIt = nodes_.find(s);
    if (nodeIt == nodes_.end()) {
      report("root or edge names unknown object #" + std::to_string(s));
      continue;
    }
    const Node& n = nodeIt->second;
    expectedWords += 1 + n.words.size();
    auto it = bySerial.find(s);
    if (it == bySerial.end()) {
      report("reachable object #" + std::to_string(s) + " was lost");
      continue;
    }
    ObjectHeader h = heap.header(it->second);
    if (h.kind != n.kind || h.sizeWords != n.words.size()) {
      report("object #" + std::to_string(s) + " changed kind or size");
      continue;
    }
    std::size_t limit = n.words.size();
    if (n.kind == ObjectKind::Stack) {
      limit = std::min<std::size_t>(limit, stack_layout::kFrames + n.words[stack_layout::kTop]);
    }
    for (std::size_t i = 0; i < limit; ++i) {
      Word actual = heap.load(it->second, static_cast<std::uint32_t>(i));
      if (n.isRef[i]) {
        std::uint64_t target = 0;
        if (actual != kNullWord) {
          auto t = serialAt.find(static_cast<std::uint32_t>(actual));
          if (t == serialAt.end()) {
            report("object #" + std::to_string(s) + " slot " + std::to_string(i) + " points outside live data");
            continue;
          }
          target = t->second;
        }
        if (target != n.words[i]) {
          report("object #" + std::to_string(s) + " slot " + std::to_string(i) + " points at #" +
                 std::to_string(target) + ", expected #" + std::to_string(n.words[i]));
        }
      } else if (actual != n.words[i]) {
        report("object #" + std::to_string(s) + " raw slot " + std::to_string(i) + " differs");
      }
    }
  }
  if (expectedWords != heap.liveWordsAfterLastCollection()) {
    report("live words " + std::to_string(heap.liveWordsAfterLastCollection()) + " != reachable words " +
           std::to_string(expectedWords));
  }
  return problems;
}

void ShadowGraph::prune() {
  std::lock_guard<std::mutex> lock(mu_);
  auto live = reachableLocked();
  for (auto it = nodes_.begin(); it != nodes_.end();) {
    if (live.count(it->first) == 0) it = nodes_.erase(it);
    else ++it;
  }
}

std::size_t ShadowGraph::nodeCount() const {
  std::lock_guard<std::mutex> lock(mu_);
  return nodes_.size();
}

}  // namespace greenrt
