#include <doctest.h>

#include <cerrno>
#include <fcntl.h>
#include <functional>
#include <sstream>
#include <sys/socket.h>
#include <unistd.h>

#include "greenrt/error.hpp"
#include "greenrt/rtcfg.hpp"

using namespace greenrt;

namespace {

std::string configError(StaticConfig c) {
  try {
    validateConfig(c);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.detail();
  }
  return "";
}

ErrorKind kindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error");
  return ErrorKind::Fatal;
}

}  // namespace

TEST_CASE("default config is valid") {
  CHECK(configError(StaticConfig{}) == "");
}

TEST_CASE("validation names the offending field") {
  StaticConfig c;
  c.heapWords = 0;
  CHECK(configError(c) == "heapWords must be positive");

  c = {};
  c.labWords = c.heapWords + 1;
  CHECK(configError(c) == "labWords must not exceed heapWords");

  c = {};
  c.initialStackWords = c.maxStackWords * 2;
  CHECK(configError(c) == "initialStackWords must not exceed maxStackWords");

  c = {};
  c.heapWords = 4096;
  CHECK(configError(c) == "maxStackWords must not exceed heapWords");

  c = {};
  c.entryPriority = c.maxPrio + 1;
  CHECK(configError(c) == "entryPriority must not exceed maxPrio");

  c = {};
  c.deterministic = true;
  c.numWorkers = 2;
  CHECK(configError(c) == "deterministic requires numWorkers=1");
}

TEST_CASE("config files: comments, whitespace and every key") {
  std::istringstream in(
      "# comment\n"
      "\n"
      "heapWords = 8192\n"
      "labWords=32   # trailing\n"
      "maxThreads=4\n"
      "quantumMode=timer\n"
      "isolateGlobals=no\n"
      "deterministic=false\n");
  StaticConfig c = parseConfig(in);
  CHECK(c.heapWords == 8192);
  CHECK(c.labWords == 32);
  CHECK(c.maxThreads == 4);
  CHECK(c.quantumMode == QuantumMode::Timer);
  CHECK_FALSE(c.isolateGlobals);
  CHECK(c.maxPrio == StaticConfig{}.maxPrio);
}

TEST_CASE("bad config lines are rejected") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    parseConfig(in);
  };
  CHECK(kindOf([&] { parse("heapWords\n"); }) == ErrorKind::Config);
  CHECK(kindOf([&] { parse("nonsense=1\n"); }) == ErrorKind::Config);
  CHECK(kindOf([&] { parse("heapWords=-3\n"); }) == ErrorKind::Config);
  CHECK(kindOf([&] { parse("isolateGlobals=maybe\n"); }) == ErrorKind::Config);
  CHECK(kindOf([&] { loadConfigFile("/nonexistent/greenrt.cfg"); }) == ErrorKind::Config);
}

TEST_CASE("formatConfig round-trips") {
  StaticConfig c;
  c.heapWords = 12345;
  c.seed = 99;
  c.quantumMode = QuantumMode::Timer;
  c.isolateGlobals = false;
  std::istringstream in(formatConfig(c));
  CHECK(parseConfig(in) == c);
}

TEST_CASE("host probe matches the system headers") {
  ConstantsFile f = probeConstants(TargetProfile::Host);
  ConstantsView v(f);
  CHECK(v.get("EINVAL") == EINVAL);
  CHECK(v.get("ENOSYS") == ENOSYS);
  CHECK(v.get("O_CREAT") == O_CREAT);
  CHECK(v.get("AF_INET") == AF_INET);
  CHECK(v.get("SOCK_DGRAM") == SOCK_DGRAM);
  CHECK(v.get("PAGE_SIZE") == ::sysconf(_SC_PAGESIZE));
  CHECK(v.get("HOST_WORD_BITS") == static_cast<std::int64_t>(sizeof(void*) * 8));
}

TEST_CASE("constants files round-trip") {
  for (auto profile : {TargetProfile::Host, TargetProfile::RtemsSim}) {
    ConstantsFile f = probeConstants(profile);
    CHECK(ConstantsFile::parse(f.serialize()) == f);
  }
}

TEST_CASE("suppressed and unknown constants never fall back to a default") {
  ConstantsView v(probeConstants(TargetProfile::RtemsSim));
  CHECK(v.file().target == "sparc-rtems5");
  CHECK(v.get("EINVAL") == 22);
  CHECK(v.contains("AF_INET"));
  CHECK(kindOf([&] { v.get("AF_INET"); }) == ErrorKind::UnsupportedConstant);
  CHECK(kindOf([&] { v.get("NO_SUCH_KEY"); }) == ErrorKind::Constants);
  CHECK_FALSE(v.contains("NO_SUCH_KEY"));
}

TEST_CASE("malformed constants files are rejected") {
  CHECK(kindOf([] { loadConstants("!version 1\nA=1\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { loadConstants("!target t\nA=1\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { loadConstants("!target t\n!version 2\nA=1\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { loadConstants("!target t\n!version 1\nA=1\nA=2\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { loadConstants("!target t\n!version 1\nA=x\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { loadConstants("!target t\n!version 1\n!bogus\n"); }) == ErrorKind::Constants);
  CHECK(kindOf([] { parseTargetProfile("vax"); }) == ErrorKind::Config);
}
