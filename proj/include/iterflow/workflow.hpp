#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace iterflow {

inline constexpr int kWorkflowFormatVersion = 1;

// Runs argv in the workspace. `{output}` and `{workspace}` in any argument are
// substituted before the process starts.
struct CommandAction {
  std::vector<std::string> argv;
  std::vector<std::string> inputs;
  std::string output;
  // Planner estimate for a command that has never run.
  std::optional<double> estimate_seconds;

  bool operator==(const CommandAction&) const = default;
};

// A synthetic operator: takes `compute_seconds` of virtual time and produces
// `output_bytes` of opaque output.
struct SimulatedAction {
  double compute_seconds = 0.0;
  std::int64_t output_bytes = 0;

  bool operator==(const SimulatedAction&) const = default;
};

using Action = std::variant<CommandAction, SimulatedAction>;

struct OperatorNode {
  std::string name;
  std::string kind;
  Action action;
  std::vector<std::string> parents;
  std::vector<std::string> sources;
  // Mixed into the signature; bump it when something outside the spec
  // (a library, a toolchain) changes.
  std::optional<std::string> env_fingerprint;

  bool is_root() const noexcept { return parents.empty(); }
  bool operator==(const OperatorNode&) const = default;
};

struct WorkflowSpec {
  int version = kWorkflowFormatVersion;
  std::vector<OperatorNode> nodes;
  std::vector<std::string> outputs;

  const OperatorNode* find(std::string_view name) const;
  OperatorNode* find(std::string_view name);
  bool operator==(const WorkflowSpec&) const = default;
};

// Parses and validates a workflow document. Throws SyntaxError, DuplicateName,
// UnknownParent, CycleDetected or NoOutputs.
WorkflowSpec parse_workflow(std::string_view text);
WorkflowSpec load_workflow_file(const std::string& path);

// Canonical JSON rendering; parse_workflow(serialize_workflow(s)) == s.
std::string serialize_workflow(const WorkflowSpec& spec);

// Validation shared by the parser and by programmatic construction.
void validate_workflow(const WorkflowSpec& spec);

// Parents before children; ready nodes are emitted in lexicographic order.
std::vector<std::string> topological_order(const WorkflowSpec& spec);

struct PruneResult {
  WorkflowSpec spec;
  std::set<std::string> removed;
};

// Keeps exactly the nodes from which some output is reachable.
PruneResult prune_dead_operators(const WorkflowSpec& spec);

// Index-based view of a workflow's graph. Node indices follow lexicographic
// name order, so index order is also the planner's tie-break order.
class Dag {
 public:
  Dag() = default;
  Dag(std::vector<std::string> names,
      const std::vector<std::pair<std::string, std::string>>& edges);  // (parent, child)
  static Dag from_spec(const WorkflowSpec& spec);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require_index(std::string_view name) const;

  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }

  std::vector<std::size_t> ancestors(std::size_t i) const;    // strict, sorted
  std::vector<std::size_t> descendants(std::size_t i) const;  // strict, sorted
  std::vector<std::size_t> topological_order() const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
};

}  // namespace iterflow
