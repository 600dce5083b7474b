// Python bindings: load programs, run them, audit traces, probe constants.

#include <sstream>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "greenrt/audit.hpp"
#include "greenrt/error.hpp"
#include "greenrt/metrics.hpp"
#include "greenrt/rtcfg.hpp"
#include "greenrt/runtime.hpp"
#include "greenrt/trace.hpp"
#include "greenrt/vmprog.hpp"

namespace py = pybind11;
using namespace greenrt;

namespace {

py::object fromJson(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

StaticConfig configFrom(const py::dict& settings) {
  StaticConfig cfg;
  for (auto [k, v] : settings) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else {
      value = py::str(v).cast<std::string>();
    }
    applyConfigSetting(cfg, k.cast<std::string>(), value);
  }
  return validateConfig(cfg);
}

py::dict auditDict(const AuditResult& r) {
  py::dict stats;
  stats["events"] = r.stats.events;
  stats["dispatches"] = r.stats.dispatches;
  stats["collections"] = r.stats.collections;
  stats["max_ack_span"] = r.stats.maxAckSpan;
  stats["max_preempt_latency"] = r.stats.maxPreemptLatency;
  stats["max_live"] = r.stats.maxLive;
  py::dict out;
  out["ok"] = r.ok();
  out["violations"] = r.violations;
  out["stats"] = stats;
  return out;
}

py::dict run(const Program& prog, const py::dict& config, std::optional<std::string> constants, bool shadowAudit,
             bool heapAudit, bool trace) {
  RunOptions opts;
  opts.config = configFrom(config);
  if (constants) opts.constants = loadConstants(*constants);
  opts.shadowAudit = shadowAudit;
  opts.heapAudit = heapAudit;

  TraceSink sink;
  ExitReport rep;
  {
    py::gil_scoped_release release;
    rep = runProgram(prog, opts, trace ? &sink : nullptr);
  }
  py::dict out;
  out["metrics"] = fromJson(emitMetrics(rep));
  out["ok"] = rep.ok;
  out["exit_status"] = rep.exitStatus;
  out["exit_value"] = rep.entryExitValue();
  out["error"] = rep.ok ? py::none() : py::cast(rep.errorMessage);
  if (trace) {
    std::ostringstream lines;
    sink.writeJsonLines(lines);
    out["trace"] = lines.str();
  }
  return out;
}

py::dict audit(const std::string& text, std::optional<std::uint64_t> k, std::optional<std::uint64_t> maxThreads) {
  std::istringstream in(text);
  std::vector<TraceEvent> events = readTrace(in);
  return auditDict(auditTrace(events, AuditOptions{k, maxThreads}));
}

}  // namespace

PYBIND11_MODULE(_greenrt, m) {
  m.doc() = "greenrt runtime kernel";

  static py::exception<Error> errorType(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(errorKindName(e.kind())), e.detail());
      PyErr_SetObject(errorType.ptr(), args.ptr());
    }
  });

  py::class_<Program>(m, "Program")
      .def_property_readonly("functions",
                             [](const Program& p) {
                               std::vector<std::string> names;
                               for (const auto& f : p.functions) names.push_back(f.name);
                               return names;
                             })
      .def_property_readonly("entry", [](const Program& p) { return p.fn(p.entry).name; })
      .def_property_readonly("globals", [](const Program& p) { return p.globals; })
      .def_property_readonly("k", [](const Program& p) -> std::optional<std::uint64_t> {
        if (p.maxPollFreeRun == kUnboundedRun) return std::nullopt;
        return p.maxPollFreeRun;
      });

  m.def(
      "load_program",
      [](const std::string& text, bool allowPollFreeLoops) { return loadProgram(text, LoadOptions{allowPollFreeLoops}); },
      py::arg("text"), py::arg("allow_pollfree_loops") = false);
  m.def(
      "load_program_file",
      [](const std::string& path, bool allowPollFreeLoops) {
        return loadProgramFile(path, LoadOptions{allowPollFreeLoops});
      },
      py::arg("path"), py::arg("allow_pollfree_loops") = false);
  m.def("run", &run, py::arg("program"), py::arg("config") = py::dict(), py::arg("constants") = py::none(),
        py::arg("shadow_audit") = false, py::arg("heap_audit") = false, py::arg("trace") = false);
  m.def("audit_trace", &audit, py::arg("text"), py::arg("k") = py::none(), py::arg("max_threads") = py::none());
  m.def(
      "probe_constants",
      [](const std::string& target) { return probeConstants(parseTargetProfile(target)).serialize(); },
      py::arg("target") = "host");
  m.def(
      "config_text", [](const py::dict& settings) { return formatConfig(configFrom(settings)); },
      py::arg("settings") = py::dict());
}
