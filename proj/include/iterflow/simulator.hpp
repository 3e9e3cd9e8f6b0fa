#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iterflow/executor.hpp"
#include "iterflow/materialization.hpp"
#include "iterflow/workflow.hpp"

namespace iterflow {

inline constexpr std::string_view kPreprocessingKind = "data-preprocessing";
inline constexpr std::string_view kMlKind = "ml";
inline constexpr std::string_view kEvaluationKind = "evaluation";
inline constexpr std::string_view kInitialRunKind = "initial";

// Probability that an iteration edits each kind of operator. The default is a
// placeholder mix, not a measured distribution.
struct KindFrequencies {
  double preprocessing = 0.4;
  double ml = 0.4;
  double evaluation = 0.2;

  void validate() const;  // ConfigError unless nonnegative and summing to 1
  bool operator==(const KindFrequencies&) const = default;
};

KindFrequencies parse_frequencies(std::string_view text);  // "0.4,0.4,0.2"

struct Modification {
  std::string target_kind;
  std::string target_node;
  bool operator==(const Modification&) const = default;
};

struct IterationTrace {
  std::uint64_t seed = 0;
  KindFrequencies frequencies;
  std::vector<Modification> steps;
  bool operator==(const IterationTrace&) const = default;
};

// Each step samples a kind, then a uniformly random node of that kind.
// Reproducible across platforms (mt19937_64 with explicit sampling).
IterationTrace generate_trace(const WorkflowSpec& workflow, const KindFrequencies& frequencies, int n_iterations,
                              std::uint64_t seed);

// One line per step: "<index>\t<kind>\t<node>".
std::string trace_to_text(const IterationTrace& trace);

// Perturbs the target's definition so its signature changes.
void apply_modification(WorkflowSpec& workflow, const Modification& mod, std::size_t step_index);

struct IterationResult {
  int iteration = 0;  // 0 is the initial cold run
  std::string kind;
  std::string target;
  double iteration_seconds = 0.0;
  double cumulative_seconds = 0.0;
  RunReport report;
};

struct SimulationResult {
  std::string policy;
  std::vector<IterationResult> iterations;

  double cumulative_seconds() const;
  // Mean iteration_seconds over edit iterations of `kind`; nullopt if none.
  std::optional<double> mean_iteration_seconds(std::string_view kind) const;
};

struct SimulationOptions {
  std::optional<std::int64_t> budget_bytes;
  CostModel cost_model;
  // Where declared source files live; defaults to the scratch cache directory.
  std::optional<std::filesystem::path> workspace;
};

// Initial cold run followed by one run per trace step, all against one fresh
// scratch cache. Requires every action to be simulated.
SimulationResult simulate(const WorkflowSpec& workflow, const IterationTrace& trace, const PolicyConfig& policy,
                          const SimulationOptions& options = {});

// Tab-separated: iteration, kind, policy, iteration_seconds, cumulative_seconds.
std::string format_simulation_table(const std::vector<SimulationResult>& results);
// Comma-separated with per-component times, for plotting tools.
std::string simulation_data_csv(const std::vector<SimulationResult>& results);

// Bundled scenario workflows ("ie-like", "classification").
std::vector<std::string> bundled_scenario_names();
std::optional<std::string_view> bundled_scenario_text(std::string_view name);
// A bundled scenario name or a path to a workflow file.
WorkflowSpec load_scenario(std::string_view name_or_path);

}  // namespace iterflow
