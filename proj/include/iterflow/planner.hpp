#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "iterflow/cost.hpp"
#include "iterflow/workflow.hpp"

namespace iterflow {

// Ordered so that comparing states gives the tie-break order Prune < Load < Compute.
enum class NodeState : std::uint8_t { Prune = 0, Load = 1, Compute = 2 };

std::string_view to_string(NodeState s) noexcept;
NodeState parse_node_state(std::string_view text);

using StateMap = std::map<std::string, NodeState, std::less<>>;
using NameSet = std::set<std::string, std::less<>>;

struct ExecutionPlan {
  StateMap states;
  double total_cost_seconds = 0.0;
  Micros total_cost_micros = 0;

  std::size_t count(NodeState s) const;
  NodeState state_of(std::string_view name) const;
  bool operator==(const ExecutionPlan&) const = default;
};

// Sum of c_i over Compute nodes plus l_i over Load nodes. Throws InfiniteCost
// when a Load node has no cached copy and UnknownCost for a missing record.
double plan_cost(const StateMap& states, const CostMap& costs);
Micros plan_cost_micros(const StateMap& states, const CostMap& costs);

// Minimum-cost legal assignment via a single s-t min cut (plus one cut per
// tie-break probe). Ties: fewest Compute nodes, then the lexicographically
// smallest state vector in name order.
ExecutionPlan assign_states_optimal(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                    const NameSet& sinks);

inline constexpr std::size_t kBruteforceMaxNodes = 15;

// Exhaustive 3^n reference with the same objective and tie-break.
// Throws TooLarge above kBruteforceMaxNodes.
ExecutionPlan assign_states_bruteforce(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                       const NameSet& sinks);

// Empty when the plan is legal; otherwise one human-readable line per broken rule.
std::vector<std::string> plan_violations(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                         const NameSet& sinks, const ExecutionPlan& plan);

}  // namespace iterflow
