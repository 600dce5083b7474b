#pragma once

#include <nlohmann/json.hpp>

#include "greenrt/runtime.hpp"

namespace greenrt {

/// Run summary: collection count, max/mean pause in wall time and in
/// instructions polled between request and acknowledgement, live words after
/// each collection, dispatch and preemption counts, stack growths and
/// per-priority wait times.
nlohmann::json emitMetrics(const ExitReport& run);

}  // namespace greenrt
