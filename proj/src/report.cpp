#include "iterflow/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace iterflow {

using ordered_json = nlohmann::ordered_json;

std::string format_seconds(double seconds) {
  if (std::isinf(seconds)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", seconds);
  return buf;
}

namespace {

ordered_json seconds_json(double s) { return std::isfinite(s) ? ordered_json(s) : ordered_json(nullptr); }

ordered_json names(const std::set<std::string>& s) { return ordered_json(std::vector<std::string>(s.begin(), s.end())); }

}  // namespace

std::string format_plan_table(const ExecutionPlan& plan, const CostMap& costs,
                              const std::vector<std::string>& order) {
  std::ostringstream out;
  out << "node\tstate\tcompute_s\tload_s\n";
  for (const auto& name : order) {
    const CostRecord& c = costs.at(name);
    out << name << '\t' << to_string(plan.state_of(name)) << '\t' << format_seconds(c.compute_seconds) << '\t'
        << format_seconds(c.load_seconds) << '\n';
  }
  out << "total\t\t" << format_seconds(plan.total_cost_seconds) << "\t(compute " << plan.count(NodeState::Compute)
      << ", load " << plan.count(NodeState::Load) << ", prune " << plan.count(NodeState::Prune) << ")\n";
  return out.str();
}

std::string plan_to_json(const ExecutionPlan& plan, const CostMap& costs, const std::vector<std::string>& order) {
  ordered_json doc;
  ordered_json nodes = ordered_json::array();
  for (const auto& name : order) {
    const CostRecord& c = costs.at(name);
    nodes.push_back({{"name", name},
                     {"state", to_string(plan.state_of(name))},
                     {"compute_seconds", c.compute_seconds},
                     {"load_seconds", seconds_json(c.load_seconds)},
                     {"output_bytes", c.output_bytes}});
  }
  doc["nodes"] = std::move(nodes);
  doc["total_cost_seconds"] = plan.total_cost_seconds;
  doc["total_cost_micros"] = plan.total_cost_micros;
  return doc.dump(2) + "\n";
}

std::string format_changes(const ChangeSet& changes) {
  if (changes.empty() && changes.added.empty()) return "no changes\n";
  std::ostringstream out;
  auto section = [&](const char* label, const std::set<std::string>& s) {
    for (const auto& n : s) out << label << '\t' << n << '\n';
  };
  section("added", changes.added);
  std::set<std::string> edited;
  for (const auto& n : changes.changed)
    if (!changes.added.contains(n)) edited.insert(n);
  section("changed", edited);
  section("deleted", changes.deleted);
  return out.str();
}

std::string changes_to_json(const ChangeSet& changes) {
  ordered_json doc;
  doc["changed"] = names(changes.changed);
  doc["unchanged"] = names(changes.unchanged);
  doc["added"] = names(changes.added);
  doc["deleted"] = names(changes.deleted);
  return doc.dump(2) + "\n";
}

std::string format_run_report(const RunReport& r) {
  std::ostringstream out;
  out << "iteration " << r.iteration_index << " (" << to_string(r.clock_mode) << " clock, policy " << r.policy
      << (r.dry_run ? ", dry run" : "") << ")\n";
  out << "node\tstate\toutcome\tseconds\tmaterialized\tr_value\n";
  for (const auto& n : r.nodes) {
    out << n.name << '\t' << to_string(n.state) << '\t' << (r.dry_run ? "planned" : to_string(n.outcome)) << '\t'
        << format_seconds(n.seconds) << '\t' << (n.materialized ? "yes" : "no") << '\t'
        << (n.decision ? format_seconds(n.decision->r_value) : "-") << '\n';
  }
  out << "compute_seconds\t" << format_seconds(r.totals.compute_seconds) << '\n'
      << "load_seconds\t" << format_seconds(r.totals.load_seconds) << '\n'
      << "materialize_seconds\t" << format_seconds(r.totals.materialize_seconds) << '\n'
      << "iteration_seconds\t" << format_seconds(r.totals.iteration_seconds) << '\n'
      << "cumulative_seconds\t" << format_seconds(r.totals.cumulative_seconds) << '\n'
      << "planned_cost_seconds\t" << format_seconds(r.plan.total_cost_seconds) << '\n';
  for (const auto& f : r.failures) out << "FAILED\t" << f << '\n';
  return out.str();
}

std::string report_to_json(const RunReport& r) {
  ordered_json doc;
  doc["iteration_index"] = r.iteration_index;
  doc["clock_mode"] = to_string(r.clock_mode);
  doc["policy"] = r.policy;
  doc["dry_run"] = r.dry_run;
  doc["success"] = r.success;
  ordered_json nodes = ordered_json::array();
  for (const auto& n : r.nodes) {
    ordered_json j;
    j["name"] = n.name;
    j["kind"] = n.kind;
    j["state"] = to_string(n.state);
    j["outcome"] = to_string(n.outcome);
    j["seconds"] = n.seconds;
    j["materialize_seconds"] = n.materialize_seconds;
    j["materialized"] = n.materialized;
    j["r_value"] = n.decision ? ordered_json(n.decision->r_value) : ordered_json(nullptr);
    j["signature"] = n.signature;
    if (!n.message.empty()) j["message"] = n.message;
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["totals"] = {{"compute_seconds", r.totals.compute_seconds},
                   {"load_seconds", r.totals.load_seconds},
                   {"materialize_seconds", r.totals.materialize_seconds},
                   {"iteration_seconds", r.totals.iteration_seconds},
                   {"cumulative_seconds", r.totals.cumulative_seconds}};
  doc["planned_cost_seconds"] = r.plan.total_cost_seconds;
  doc["changes"] = {{"changed", names(r.changes.changed)},
                    {"added", names(r.changes.added)},
                    {"deleted", names(r.changes.deleted)}};
  doc["removed_dead"] = names(r.removed_dead);
  doc["failures"] = r.failures;
  return doc.dump();
}

}  // namespace iterflow
