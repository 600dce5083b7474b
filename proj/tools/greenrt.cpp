// greenrt command-line driver: run programs, probe target constants, audit traces.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "greenrt/audit.hpp"
#include "greenrt/error.hpp"
#include "greenrt/metrics.hpp"
#include "greenrt/rtcfg.hpp"
#include "greenrt/runtime.hpp"
#include "greenrt/trace.hpp"
#include "greenrt/vmprog.hpp"

namespace {

using namespace greenrt;

struct RunArgs {
  std::string program;
  std::string config;
  std::string constants;
  std::optional<std::uint64_t> workers;
  std::optional<std::uint64_t> heapWords;
  std::optional<std::uint64_t> quantum;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string trace;
  std::string metrics;
  bool shadowAudit = false;
  bool heapAudit = false;
  bool allowPollFreeLoops = false;
};

int runCommand(const RunArgs& a) {
  StaticConfig cfg;
  RunOptions opts;
  Program prog;
  try {
    if (!a.config.empty()) cfg = loadConfigFile(a.config);
    if (a.workers) cfg.numWorkers = *a.workers;
    if (a.heapWords) cfg.heapWords = *a.heapWords;
    if (a.quantum) cfg.quantumPolls = *a.quantum;
    if (a.seed) cfg.seed = *a.seed;
    if (a.deterministic) {
      cfg.deterministic = true;
      if (!a.workers) cfg.numWorkers = 1;
    }
    validateConfig(cfg);
    if (!a.constants.empty()) opts.constants = loadConstantsFile(a.constants);
    prog = loadProgramFile(a.program, LoadOptions{a.allowPollFreeLoops});
  } catch (const Error& e) {
    std::cerr << "greenrt: " << e.what() << "\n";
    return exitStatusFor(e.kind());
  }
  opts.config = cfg;
  opts.shadowAudit = a.shadowAudit;
  opts.heapAudit = a.heapAudit;

  TraceSink sink;
  const bool tracing = !a.trace.empty();
  ExitReport rep = runProgram(prog, opts, tracing ? &sink : nullptr);

  int status = rep.exitStatus;
  nlohmann::json metrics = emitMetrics(rep);
  if (tracing) {
    std::ofstream out(a.trace);
    if (!out) {
      std::cerr << "greenrt: cannot write trace " << a.trace << "\n";
      return kExitConfig;
    }
    sink.writeJsonLines(out);
    AuditResult audit = auditTrace(sink.snapshot());
    metrics["traceAudit"] = {{"violations", audit.violations.size()}};
    if (!audit.ok()) {
      for (const auto& v : audit.violations) std::cerr << "greenrt: trace audit: " << v << "\n";
      if (status == kExitOk) status = kExitAudit;
    }
  }
  for (const auto& m : rep.auditMessages) std::cerr << "greenrt: audit: " << m << "\n";
  if (!rep.ok) std::cerr << "greenrt: " << rep.errorMessage << "\n";
  metrics["status"] = status;

  if (!a.metrics.empty()) {
    std::ofstream out(a.metrics);
    out << metrics.dump(2) << "\n";
  } else {
    std::cout << metrics.dump(2) << "\n";
  }
  return status;
}

int probeCommand(const std::string& target, const std::string& output) {
  try {
    ConstantsFile file = probeConstants(parseTargetProfile(target));
    std::ofstream out(output);
    if (!out) fail(ErrorKind::Constants, "cannot write " + output);
    out << file.serialize();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "greenrt: " << e.what() << "\n";
    return exitStatusFor(e.kind());
  }
}

int auditCommand(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "greenrt: cannot read " << path << "\n";
    return kExitConfig;
  }
  std::vector<TraceEvent> events;
  try {
    events = readTrace(in);
  } catch (const std::exception& e) {
    std::cerr << "greenrt: " << e.what() << "\n";
    return kExitAudit;
  }
  AuditResult r = auditTrace(events);
  for (const auto& v : r.violations) std::cout << v << "\n";
  std::cout << (r.ok() ? "pass" : "FAIL") << ": " << r.stats.events << " events, " << r.stats.collections
            << " collections, " << r.stats.dispatches << " dispatches, " << r.violations.size() << " violations\n";
  return r.ok() ? kExitOk : kExitAudit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"greenrt: green-thread runtime kernel with a stop-the-world copying collector"};
  app.require_subcommand(1);

  RunArgs run;
  auto* runCmd = app.add_subcommand("run", "Run a program");
  runCmd->add_option("program", run.program, "Program file (.gasm)")->required()->check(CLI::ExistingFile);
  runCmd->add_option("--config", run.config, "Static configuration file")->check(CLI::ExistingFile);
  runCmd->add_option("--constants", run.constants, "Target constants file")->check(CLI::ExistingFile);
  runCmd->add_option("--workers", run.workers, "OS worker threads");
  runCmd->add_option("--heap-words", run.heapWords, "Words per semispace");
  runCmd->add_option("--quantum", run.quantum, "Scheduling quantum in safe-point polls");
  runCmd->add_option("--seed", run.seed, "Seed for RAND");
  runCmd->add_flag("--deterministic", run.deterministic, "Single worker, polled quanta, reproducible trace");
  runCmd->add_option("--trace", run.trace, "Write a JSON-lines trace and audit it");
  runCmd->add_option("--metrics", run.metrics, "Write metrics to a file instead of stdout");
  runCmd->add_flag("--shadow-audit", run.shadowAudit, "Check every collection against the shadow graph");
  runCmd->add_flag("--heap-audit", run.heapAudit, "Walk the heap after every collection");
  runCmd->add_flag("--allow-pollfree-loops", run.allowPollFreeLoops, "Accept loops without a safe point");

  std::string target = "host";
  std::string output;
  auto* probeCmd = app.add_subcommand("probe-constants", "Write a target constants file");
  probeCmd->add_option("--target", target, "host or rtems-sim")->check(CLI::IsMember({"host", "rtems-sim"}));
  probeCmd->add_option("-o,--output", output, "Output file")->required();

  std::string tracePath;
  auto* auditCmd = app.add_subcommand("audit", "Audit a trace file");
  auditCmd->add_option("trace", tracePath, "Trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (runCmd->parsed()) return runCommand(run);
  if (probeCmd->parsed()) return probeCommand(target, output);
  if (auditCmd->parsed()) return auditCommand(tracePath);
  return kExitConfig;
}
