#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "iterflow/cache_store.hpp"
#include "iterflow/cost.hpp"
#include "iterflow/materialization.hpp"
#include "iterflow/planner.hpp"
#include "iterflow/signature.hpp"
#include "iterflow/workflow.hpp"

namespace iterflow {

// Real: commands are charged their wall time. Simulated: every operator is
// charged its declared or estimated cost, so reports are exactly reproducible.
enum class ClockMode { Real, Simulated };

std::string_view to_string(ClockMode m) noexcept;
ClockMode parse_clock_mode(std::string_view text);

// Inputs to the cost estimates the planner sees.
struct CostModel {
  double disk_bandwidth = kDefaultDiskBandwidthBytesPerSecond;
  double default_command_seconds = 1.0;
};

// Planner costs for the current iteration. A node is cached (finite
// load_seconds) iff the manifest holds an entry for its current signature.
CostMap assemble_costs(const WorkflowSpec& spec, const SignatureMap& signatures,
                       const CacheManifest& manifest, const CostModel& model);

enum class Outcome {
  Ok,
  Pruned,
  Skipped,       // an input was unavailable
  Failed,        // the operator itself failed
  LoadFallback,  // the cached copy was unusable; recomputed instead
};
std::string_view to_string(Outcome o) noexcept;

struct NodeRecord {
  std::string name;
  std::string kind;
  NodeState state = NodeState::Prune;
  Outcome outcome = Outcome::Pruned;
  double seconds = 0.0;  // compute or load time charged to this node
  double materialize_seconds = 0.0;
  std::optional<MaterializationDecision> decision;
  bool materialized = false;
  std::string signature;
  std::string message;
};

struct RunTotals {
  double compute_seconds = 0.0;
  double load_seconds = 0.0;
  double materialize_seconds = 0.0;
  double iteration_seconds = 0.0;
  double cumulative_seconds = 0.0;
};

struct RunReport {
  int iteration_index = 0;
  ClockMode clock_mode = ClockMode::Simulated;
  std::string policy;
  bool dry_run = false;
  bool success = true;
  std::vector<NodeRecord> nodes;  // topological order
  RunTotals totals;
  ChangeSet changes;
  ExecutionPlan plan;
  std::set<std::string> removed_dead;
  std::vector<std::string> failures;

  const NodeRecord* find(std::string_view name) const;
};

// Instrumentation for tests: called as operators start, finish, and are
// decided on.
enum class ExecEvent { ComputeStart, ComputeEnd, Decided };
using ExecObserver = std::function<void(ExecEvent, const std::string& node)>;

struct ExecuteOptions {
  ClockMode clock = ClockMode::Simulated;
  std::filesystem::path workspace = ".";
  std::optional<std::int64_t> budget_bytes;
  CostModel cost_model;
  ExecObserver observer;
  // Wraps the cost lookup handed to the materialization policy.
  std::function<CostLookup(CostLookup)> decision_lookup_wrapper;
};

// Runs a legal plan. Operator failures are reported, not thrown: the failed
// node's descendants are skipped and independent chains continue.
RunReport execute(const WorkflowSpec& spec, const ExecutionPlan& plan, const SignatureMap& signatures,
                  const CostMap& planning_costs, CacheStore& cache, const PolicyConfig& policy,
                  const ExecuteOptions& options);

struct RunConfig {
  std::filesystem::path workspace;
  std::filesystem::path cache_root;
  std::optional<std::int64_t> budget_bytes;
  PolicyConfig policy = EnginePolicy{};
  bool dry_run = false;
  std::optional<ClockMode> clock_mode;  // default: Simulated iff every action is simulated
  CostModel cost_model;
};

// Everything decided before execution starts.
struct IterationPlan {
  WorkflowSpec spec;  // dead operators removed
  std::set<std::string> removed_dead;
  ClockMode clock = ClockMode::Simulated;
  SignatureMap signatures;
  ChangeSet changes;
  CostMap costs;
  ExecutionPlan plan;
  std::vector<std::string> order;  // topological
};

// Read-only: prune dead -> signatures -> diff -> costs -> optimal plan.
IterationPlan plan_iteration(const WorkflowSpec& spec, const RunConfig& config, const CacheManifest& manifest);

// parse -> prune dead -> signatures -> diff -> costs -> plan -> execute, then
// persists history and appends the report to <cache_root>/runs.log.
RunReport run_iteration(const WorkflowSpec& spec, const RunConfig& config);
RunReport run_iteration(const std::filesystem::path& spec_path, const RunConfig& config);

ClockMode resolve_clock_mode(const WorkflowSpec& spec, std::optional<ClockMode> requested);

// Reads <cache_root>/runs.log; one report document per line.
std::vector<std::string> read_run_log(const std::filesystem::path& cache_root);

}  // namespace iterflow
