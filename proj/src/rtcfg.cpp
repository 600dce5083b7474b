#include "greenrt/rtcfg.hpp"

#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <climits>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <sys/socket.h>
#include <netinet/in.h>

#include "greenrt/error.hpp"

namespace greenrt {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string stripComment(const std::string& s) {
  auto pos = s.find('#');
  return pos == std::string::npos ? s : s.substr(0, pos);
}

bool parseInt(const std::string& text, std::int64_t& out) {
  std::string s = trim(text);
  if (s.empty()) return false;
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '-') {
    neg = true;
    i = 1;
  }
  int base = 10;
  if (s.size() > i + 2 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
    base = 16;
    i += 2;
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size()) return false;
  out = neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
  return true;
}

std::uint64_t parseUnsigned(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  if (!parseInt(value, v) || v < 0) fail(ErrorKind::Config, key + ": expected a non-negative integer, got '" + value + "'");
  return static_cast<std::uint64_t>(v);
}

bool parseBool(const std::string& key, const std::string& value) {
  std::string v = trim(value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::Config, key + ": expected a boolean, got '" + value + "'");
}

void requirePositive(std::uint64_t v, const char* field) {
  if (v == 0) fail(ErrorKind::Config, std::string(field) + " must be positive");
}

}  // namespace

const StaticConfig& validateConfig(const StaticConfig& cfg) {
  requirePositive(cfg.heapWords, "heapWords");
  requirePositive(cfg.labWords, "labWords");
  requirePositive(cfg.maxThreads, "maxThreads");
  requirePositive(cfg.maxPrio, "maxPrio");
  requirePositive(cfg.initialStackWords, "initialStackWords");
  requirePositive(cfg.maxStackWords, "maxStackWords");
  requirePositive(cfg.numWorkers, "numWorkers");
  requirePositive(cfg.quantumPolls, "quantumPolls");
  requirePositive(cfg.globalsPerWorker, "globalsPerWorker");
  requirePositive(cfg.quantumMicros, "quantumMicros");
  // Offsets are 32-bit with one value reserved for null.
  if (cfg.heapWords >= UINT32_MAX) fail(ErrorKind::Config, "heapWords exceeds the addressable range");
  if (cfg.labWords > cfg.heapWords) fail(ErrorKind::Config, "labWords must not exceed heapWords");
  if (cfg.initialStackWords > cfg.maxStackWords) {
    fail(ErrorKind::Config, "initialStackWords must not exceed maxStackWords");
  }
  if (cfg.maxStackWords > cfg.heapWords) fail(ErrorKind::Config, "maxStackWords must not exceed heapWords");
  if (cfg.entryPriority > cfg.maxPrio) fail(ErrorKind::Config, "entryPriority must not exceed maxPrio");
  if (cfg.maxPrio > 1024) fail(ErrorKind::Config, "maxPrio is limited to 1024");
  if (cfg.numWorkers > 256) fail(ErrorKind::Config, "numWorkers is limited to 256");
  if (cfg.deterministic && cfg.numWorkers != 1) {
    fail(ErrorKind::Config, "deterministic requires numWorkers=1");
  }
  if (cfg.deterministic && cfg.quantumMode != QuantumMode::Polls) {
    fail(ErrorKind::Config, "deterministic requires quantumMode=polls");
  }
  return cfg;
}

void applyConfigSetting(StaticConfig& cfg, const std::string& rawKey, const std::string& value) {
  const std::string key = trim(rawKey);
  if (key == "heapWords") cfg.heapWords = parseUnsigned(key, value);
  else if (key == "labWords") cfg.labWords = parseUnsigned(key, value);
  else if (key == "maxThreads") cfg.maxThreads = parseUnsigned(key, value);
  else if (key == "maxPrio") cfg.maxPrio = parseUnsigned(key, value);
  else if (key == "initialStackWords") cfg.initialStackWords = parseUnsigned(key, value);
  else if (key == "maxStackWords") cfg.maxStackWords = parseUnsigned(key, value);
  else if (key == "numWorkers") cfg.numWorkers = parseUnsigned(key, value);
  else if (key == "quantumPolls") cfg.quantumPolls = parseUnsigned(key, value);
  else if (key == "globalsPerWorker") cfg.globalsPerWorker = parseUnsigned(key, value);
  else if (key == "deterministic") cfg.deterministic = parseBool(key, value);
  else if (key == "entryPriority") cfg.entryPriority = parseUnsigned(key, value);
  else if (key == "quantumMicros") cfg.quantumMicros = parseUnsigned(key, value);
  else if (key == "seed") cfg.seed = parseUnsigned(key, value);
  else if (key == "isolateGlobals") cfg.isolateGlobals = parseBool(key, value);
  else if (key == "quantumMode") {
    std::string v = trim(value);
    if (v == "polls") cfg.quantumMode = QuantumMode::Polls;
    else if (v == "timer") cfg.quantumMode = QuantumMode::Timer;
    else fail(ErrorKind::Config, "quantumMode: expected polls or timer, got '" + v + "'");
  } else {
    fail(ErrorKind::Config, "unknown config key '" + key + "'");
  }
}

StaticConfig parseConfig(std::istream& in, StaticConfig base) {
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string body = trim(stripComment(line));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, "line " + std::to_string(lineNo) + ": expected key=value");
    }
    applyConfigSetting(base, body.substr(0, eq), body.substr(eq + 1));
  }
  return base;
}

StaticConfig loadConfigFile(const std::string& path, StaticConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path);
  return parseConfig(in, base);
}

std::string formatConfig(const StaticConfig& c) {
  std::ostringstream out;
  out << "heapWords=" << c.heapWords << '\n'
      << "labWords=" << c.labWords << '\n'
      << "maxThreads=" << c.maxThreads << '\n'
      << "maxPrio=" << c.maxPrio << '\n'
      << "initialStackWords=" << c.initialStackWords << '\n'
      << "maxStackWords=" << c.maxStackWords << '\n'
      << "numWorkers=" << c.numWorkers << '\n'
      << "quantumPolls=" << c.quantumPolls << '\n'
      << "globalsPerWorker=" << c.globalsPerWorker << '\n'
      << "deterministic=" << (c.deterministic ? "true" : "false") << '\n'
      << "entryPriority=" << c.entryPriority << '\n'
      << "quantumMode=" << (c.quantumMode == QuantumMode::Polls ? "polls" : "timer") << '\n'
      << "quantumMicros=" << c.quantumMicros << '\n'
      << "seed=" << c.seed << '\n'
      << "isolateGlobals=" << (c.isolateGlobals ? "true" : "false") << '\n';
  return out.str();
}

// ConstantsFile --------------------------------------------------------------

void ConstantsFile::add(ConstantEntry e) {
  if (e.key.empty()) fail(ErrorKind::Constants, "empty constant key");
  if (index_.count(e.key) != 0) fail(ErrorKind::Constants, "duplicate constant key " + e.key);
  index_.emplace(e.key, entries_.size());
  entries_.push_back(std::move(e));
}

void ConstantsFile::set(const std::string& key, std::int64_t value) { add({key, value}); }

void ConstantsFile::setUnsupported(const std::string& key) { add({key, std::nullopt}); }

const ConstantEntry* ConstantsFile::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::string ConstantsFile::serialize() const {
  std::ostringstream out;
  out << "!target " << target << '\n' << "!version " << version << '\n';
  for (const auto& e : entries_) {
    out << e.key << '=';
    if (e.value) out << *e.value;
    else out << "!unsupported";
    out << '\n';
  }
  return out.str();
}

ConstantsFile ConstantsFile::parse(std::istream& in) {
  ConstantsFile file;
  bool sawVersion = false;
  bool sawTarget = false;
  std::string line;
  int lineNo = 0;
  auto where = [&] { return "line " + std::to_string(lineNo) + ": "; };
  while (std::getline(in, line)) {
    ++lineNo;
    std::string body = trim(stripComment(line));
    if (body.empty()) continue;
    if (body[0] == '!') {
      auto sp = body.find_first_of(" \t");
      std::string directive = body.substr(1, sp == std::string::npos ? std::string::npos : sp - 1);
      std::string arg = sp == std::string::npos ? std::string() : trim(body.substr(sp));
      if (directive == "target") {
        if (arg.empty()) fail(ErrorKind::Constants, where() + "!target needs a triple");
        file.target = arg;
        sawTarget = true;
      } else if (directive == "version") {
        std::int64_t v = 0;
        if (!parseInt(arg, v)) fail(ErrorKind::Constants, where() + "bad version '" + arg + "'");
        file.version = static_cast<int>(v);
        sawVersion = true;
      } else {
        fail(ErrorKind::Constants, where() + "unknown directive !" + directive);
      }
      continue;
    }
    auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Constants, where() + "expected KEY=VALUE");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (value == "!unsupported") {
      file.setUnsupported(key);
    } else {
      std::int64_t v = 0;
      if (!parseInt(value, v)) fail(ErrorKind::Constants, where() + "bad value for " + key);
      file.set(key, v);
    }
  }
  if (!sawTarget) fail(ErrorKind::Constants, "missing !target header");
  if (!sawVersion) fail(ErrorKind::Constants, "missing !version header");
  return file;
}

ConstantsFile ConstantsFile::parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

TargetProfile parseTargetProfile(const std::string& name) {
  if (name == "host") return TargetProfile::Host;
  if (name == "rtems-sim") return TargetProfile::RtemsSim;
  fail(ErrorKind::Config, "unknown target profile '" + name + "' (expected host or rtems-sim)");
}

namespace {

std::string hostTriple() {
#if defined(__x86_64__)
  std::string arch = "x86_64";
#elif defined(__aarch64__)
  std::string arch = "aarch64";
#else
  std::string arch = "unknown";
#endif
#if defined(__linux__)
  return arch + "-linux-gnu";
#elif defined(__APPLE__)
  return arch + "-apple-darwin";
#else
  return arch + "-unknown";
#endif
}

// Captured once from the target under emulation and shipped with the runtime.
// There is no network stack on the target, so socket constants are suppressed.
constexpr const char* kRtemsSimConstants = R"(# bundled target constants (probe stage skipped)
!target sparc-rtems5
!version 1
WORD_BITS=64
HOST_WORD_BITS=32
PAGE_SIZE=4096
EPERM=1
ENOENT=2
EINTR=4
EIO=5
EBADF=9
EAGAIN=11
ENOMEM=12
EACCES=13
EEXIST=17
EINVAL=22
ENOSYS=88
O_RDONLY=0
O_WRONLY=1
O_RDWR=2
O_CREAT=512
O_TRUNC=1024
O_APPEND=8
SEEK_SET=0
SEEK_CUR=1
SEEK_END=2
HAVE_MUNMAP=!unsupported
AF_INET=!unsupported
AF_INET6=!unsupported
AF_UNIX=!unsupported
SOCK_STREAM=!unsupported
SOCK_DGRAM=!unsupported
SOCK_RAW=!unsupported
IPPROTO_TCP=!unsupported
IPPROTO_UDP=!unsupported
SOL_SOCKET=!unsupported
SO_REUSEADDR=!unsupported
SO_KEEPALIVE=!unsupported
MSG_PEEK=!unsupported
SHUT_RDWR=!unsupported
)";

}  // namespace

ConstantsFile probeConstants(TargetProfile profile) {
  if (profile == TargetProfile::RtemsSim) return ConstantsFile::parse(std::string(kRtemsSimConstants));

  ConstantsFile f;
  f.target = hostTriple();
  f.set("WORD_BITS", 64);
  f.set("HOST_WORD_BITS", static_cast<std::int64_t>(sizeof(void*) * CHAR_BIT));
  f.set("PAGE_SIZE", static_cast<std::int64_t>(::sysconf(_SC_PAGESIZE)));
  f.set("EPERM", EPERM);
  f.set("ENOENT", ENOENT);
  f.set("EINTR", EINTR);
  f.set("EIO", EIO);
  f.set("EBADF", EBADF);
  f.set("EAGAIN", EAGAIN);
  f.set("ENOMEM", ENOMEM);
  f.set("EACCES", EACCES);
  f.set("EEXIST", EEXIST);
  f.set("EINVAL", EINVAL);
  f.set("ENOSYS", ENOSYS);
  f.set("O_RDONLY", O_RDONLY);
  f.set("O_WRONLY", O_WRONLY);
  f.set("O_RDWR", O_RDWR);
  f.set("O_CREAT", O_CREAT);
  f.set("O_TRUNC", O_TRUNC);
  f.set("O_APPEND", O_APPEND);
  f.set("SEEK_SET", SEEK_SET);
  f.set("SEEK_CUR", SEEK_CUR);
  f.set("SEEK_END", SEEK_END);
  f.set("HAVE_MUNMAP", 1);
  f.set("AF_INET", AF_INET);
  f.set("AF_INET6", AF_INET6);
  f.set("AF_UNIX", AF_UNIX);
  f.set("SOCK_STREAM", SOCK_STREAM);
  f.set("SOCK_DGRAM", SOCK_DGRAM);
  f.set("SOCK_RAW", SOCK_RAW);
  f.set("IPPROTO_TCP", IPPROTO_TCP);
  f.set("IPPROTO_UDP", IPPROTO_UDP);
  f.set("SOL_SOCKET", SOL_SOCKET);
  f.set("SO_REUSEADDR", SO_REUSEADDR);
  f.set("SO_KEEPALIVE", SO_KEEPALIVE);
  f.set("MSG_PEEK", MSG_PEEK);
  f.set("SHUT_RDWR", SHUT_RDWR);
  return f;
}

ConstantsView::ConstantsView(ConstantsFile file) : file_(std::move(file)) {
  if (file_.version != kConstantsFormatVersion) {
    fail(ErrorKind::Constants, "unsupported constants format version " + std::to_string(file_.version));
  }
}

std::int64_t ConstantsView::get(const std::string& key) const {
  const ConstantEntry* e = file_.find(key);
  if (e == nullptr) fail(ErrorKind::Constants, "unknown constant " + key);
  if (!e->value) fail(ErrorKind::UnsupportedConstant, key + " is not supported on target " + file_.target);
  return *e->value;
}

bool ConstantsView::contains(const std::string& key) const { return file_.find(key) != nullptr; }

ConstantsView loadConstants(const std::string& text) { return ConstantsView(ConstantsFile::parse(text)); }

ConstantsView loadConstantsFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Constants, "cannot open constants file " + path);
  return ConstantsView(ConstantsFile::parse(in));
}

}  // namespace greenrt
