#pragma once

#include <string>
#include <vector>

#include "iterflow/cost.hpp"
#include "iterflow/executor.hpp"
#include "iterflow/planner.hpp"
#include "iterflow/signature.hpp"

namespace iterflow {

// Fixed six-decimal rendering; "inf" for infinity.
std::string format_seconds(double seconds);

// Tab-separated: node, state, compute_s, load_s; then a total line. Rows in `order`.
std::string format_plan_table(const ExecutionPlan& plan, const CostMap& costs,
                              const std::vector<std::string>& order);
std::string plan_to_json(const ExecutionPlan& plan, const CostMap& costs, const std::vector<std::string>& order);

std::string format_changes(const ChangeSet& changes);
std::string changes_to_json(const ChangeSet& changes);

std::string format_run_report(const RunReport& report);
// Single line, no trailing newline; the run log format.
std::string report_to_json(const RunReport& report);

}  // namespace iterflow
