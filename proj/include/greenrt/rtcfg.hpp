#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace greenrt {

enum class QuantumMode { Polls, Timer };

/// Resource limits fixed before the runtime starts. All limits are hard: the
/// runtime reports an error rather than growing past them.
struct StaticConfig {
  std::uint64_t heapWords = 1u << 16;
  std::uint64_t labWords = 256;
  std::uint64_t maxThreads = 64;
  std::uint64_t maxPrio = 7;
  std::uint64_t initialStackWords = 256;
  std::uint64_t maxStackWords = 1u << 15;
  std::uint64_t numWorkers = 1;
  std::uint64_t quantumPolls = 100;
  std::uint64_t globalsPerWorker = 8;
  bool deterministic = false;
  std::uint64_t entryPriority = 1;

  QuantumMode quantumMode = QuantumMode::Polls;
  std::uint64_t quantumMicros = 1000;
  std::uint64_t seed = 0;
  /// Per-worker globals. Turning this off makes every worker share row 0,
  /// which reintroduces the cross-worker temporary race.
  bool isolateGlobals = true;

  bool operator==(const StaticConfig&) const = default;
};

/// Throws ConfigError naming the first offending field.
const StaticConfig& validateConfig(const StaticConfig& cfg);

/// Applies one `key=value` assignment. Keys are the field names above.
void applyConfigSetting(StaticConfig& cfg, const std::string& key, const std::string& value);

/// Parses a config file (`key=value` lines, `#` comments) on top of `base`.
StaticConfig parseConfig(std::istream& in, StaticConfig base = {});
StaticConfig loadConfigFile(const std::string& path, StaticConfig base = {});
std::string formatConfig(const StaticConfig& cfg);

// Target constants ---------------------------------------------------------

struct ConstantEntry {
  std::string key;
  std::optional<std::int64_t> value;  // empty when unsupported

  bool supported() const { return value.has_value(); }
  bool operator==(const ConstantEntry&) const = default;
};

inline constexpr int kConstantsFormatVersion = 1;

class ConstantsFile {
 public:
  std::string target;
  int version = kConstantsFormatVersion;

  void set(const std::string& key, std::int64_t value);
  void setUnsupported(const std::string& key);
  const std::vector<ConstantEntry>& entries() const { return entries_; }
  const ConstantEntry* find(const std::string& key) const;

  std::string serialize() const;
  static ConstantsFile parse(std::istream& in);
  static ConstantsFile parse(const std::string& text);

  bool operator==(const ConstantsFile& o) const {
    return target == o.target && version == o.version && entries_ == o.entries_;
  }

 private:
  void add(ConstantEntry e);

  std::vector<ConstantEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class TargetProfile { Host, RtemsSim };

TargetProfile parseTargetProfile(const std::string& name);

/// Host profile probes the live system; rtems-sim returns the bundled
/// target file with networking constants marked unsupported.
ConstantsFile probeConstants(TargetProfile profile);

/// Read-only view; the only way the runtime reads target constants.
class ConstantsView {
 public:
  explicit ConstantsView(ConstantsFile file);

  /// Throws UnsupportedConstant for suppressed keys and ConstantsError for
  /// unknown ones. Never substitutes a default.
  std::int64_t get(const std::string& key) const;
  bool contains(const std::string& key) const;
  const ConstantsFile& file() const { return file_; }

 private:
  ConstantsFile file_;
};

/// Parses and checks the format version. Throws ConstantsError.
ConstantsView loadConstants(const std::string& text);
ConstantsView loadConstantsFile(const std::string& path);

}  // namespace greenrt
