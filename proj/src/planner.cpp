#include "iterflow/planner.hpp"

#include <limits>
#include <optional>
#include <stdexcept>

#include "iterflow/error.hpp"
#include "iterflow/max_flow.hpp"

namespace iterflow {

std::string_view to_string(NodeState s) noexcept {
  switch (s) {
    case NodeState::Prune: return "prune";
    case NodeState::Load: return "load";
    case NodeState::Compute: return "compute";
  }
  return "?";
}

NodeState parse_node_state(std::string_view text) {
  if (text == "prune") return NodeState::Prune;
  if (text == "load") return NodeState::Load;
  if (text == "compute") return NodeState::Compute;
  throw SyntaxError("unknown node state '" + std::string(text) + "'");
}

std::size_t ExecutionPlan::count(NodeState s) const {
  std::size_t n = 0;
  for (const auto& [_, st] : states) n += (st == s);
  return n;
}

NodeState ExecutionPlan::state_of(std::string_view name) const {
  auto it = states.find(name);
  if (it == states.end()) throw NotFound("plan has no state for '" + std::string(name) + "'");
  return it->second;
}

namespace {

const CostRecord& cost_of(const CostMap& costs, std::string_view name) {
  auto it = costs.find(name);
  if (it == costs.end()) throw UnknownCost(std::string(name));
  return it->second;
}

// Integer view of one planning instance, shared by both planners.
struct Instance {
  std::size_t n = 0;
  std::vector<Micros> compute;
  std::vector<std::optional<Micros>> load;  // nullopt: not cached
  std::vector<bool> mandatory;
  std::vector<bool> sink;

  Instance(const Dag& dag, const CostMap& costs, const NameSet& mandatory_names,
           const NameSet& sink_names)
      : n(dag.size()), compute(n), load(n), mandatory(n, false), sink(n, false) {
    for (std::size_t i = 0; i < n; ++i) {
      const CostRecord& c = cost_of(costs, dag.name(i));
      auto cu = to_micros(c.compute_seconds);
      if (!cu || *cu < 0) throw UnknownCost(dag.name(i));
      compute[i] = *cu;
      if (c.cached()) {
        if (c.load_seconds < 0) throw UnknownCost(dag.name(i));
        load[i] = to_micros(c.load_seconds);
      }
    }
    for (const auto& m : mandatory_names) mandatory[dag.require_index(m)] = true;
    for (const auto& s : sink_names) sink[dag.require_index(s)] = true;
  }
};

Micros objective(const Instance& inst, const std::vector<NodeState>& states) {
  Micros total = 0;
  for (std::size_t i = 0; i < inst.n; ++i) {
    if (states[i] == NodeState::Compute) total += inst.compute[i];
    if (states[i] == NodeState::Load) total += *inst.load[i];
  }
  return total;
}

bool legal(const Dag& dag, const Instance& inst, const std::vector<NodeState>& states) {
  for (std::size_t i = 0; i < inst.n; ++i) {
    const NodeState s = states[i];
    if (s == NodeState::Load && !inst.load[i]) return false;
    if (inst.mandatory[i] && s != NodeState::Compute) return false;
    if (inst.sink[i] && s == NodeState::Prune) return false;
    if (s == NodeState::Compute) {
      for (auto p : dag.parents(i))
        if (states[p] == NodeState::Prune) return false;
    }
  }
  return true;
}

ExecutionPlan make_plan(const Dag& dag, const CostMap& costs, const std::vector<NodeState>& states) {
  ExecutionPlan plan;
  for (std::size_t i = 0; i < dag.size(); ++i) plan.states.emplace(dag.name(i), states[i]);
  plan.total_cost_micros = plan_cost_micros(plan.states, costs);
  plan.total_cost_seconds = plan_cost(plan.states, costs);
  return plan;
}

// Flow network for the three-state assignment.
//
//   v_i -> T      c_i            cut iff i is computed
//   a_i -> v_i    l_i (inf if uncached)   cut iff i is needed but not computed (loaded)
//   v_j -> a_i    inf  for each child j of i   a computed child needs its parent
//   S -> a_i      inf  for sinks               sinks are needed
//   S -> v_i      inf  for mandatory nodes     forced compute
//
// State of i from the source side of the cut: v_i in S => Compute,
// else a_i in S => Load, else Prune. Every capacity is scaled by (n + 1) and
// compute edges carry +1, so the cut minimises cost first and the number of
// computed nodes second.
class StateNetwork {
 public:
  enum class Fix : std::uint8_t { Free, Prune, Load, Compute };

  StateNetwork(const Dag& dag, const Instance& inst) : dag_(dag), inst_(inst) {
    const auto scale = static_cast<__int128>(inst.n) + 1;
    __int128 total = 1;
    compute_cap_.resize(inst.n);
    load_cap_.resize(inst.n);
    for (std::size_t i = 0; i < inst.n; ++i) {
      const __int128 cc = static_cast<__int128>(inst.compute[i]) * scale + 1;
      compute_cap_[i] = static_cast<MaxFlow::Capacity>(cc);
      total += cc;
      if (inst.load[i]) {
        const __int128 lc = static_cast<__int128>(*inst.load[i]) * scale;
        load_cap_[i] = static_cast<MaxFlow::Capacity>(lc);
        total += lc;
      }
    }
    if (total >= (static_cast<__int128>(1) << 61))
      throw std::overflow_error("cost magnitudes too large for the planning network");
    inf_ = static_cast<MaxFlow::Capacity>(total);
    for (std::size_t i = 0; i < inst.n; ++i)
      if (!inst.load[i]) load_cap_[i] = inf_;
  }

  // Minimum scaled objective subject to `fixes`; nullopt when infeasible.
  // On success `states` receives one optimal assignment.
  std::optional<MaxFlow::Capacity> solve(const std::vector<Fix>& fixes, std::vector<NodeState>& states) const {
    constexpr std::size_t S = 0, T = 1;
    auto v = [](std::size_t i) { return 2 + 2 * i; };
    auto a = [](std::size_t i) { return 3 + 2 * i; };

    MaxFlow net(2 + 2 * inst_.n);
    for (std::size_t i = 0; i < inst_.n; ++i) {
      const Fix f = fixes[i];
      const bool never_compute = f == Fix::Prune || f == Fix::Load;
      net.add_edge(v(i), T, never_compute ? inf_ : compute_cap_[i]);
      net.add_edge(a(i), v(i), load_cap_[i]);
      for (auto child : dag_.children(i)) net.add_edge(v(child), a(i), inf_);
      if (inst_.sink[i] || f == Fix::Load) net.add_edge(S, a(i), inf_);
      if (inst_.mandatory[i] || f == Fix::Compute) net.add_edge(S, v(i), inf_);
      if (f == Fix::Prune) net.add_edge(a(i), T, inf_);
    }
    const MaxFlow::Capacity cut = net.solve(S, T, inf_);
    if (cut >= inf_) return std::nullopt;

    const auto side = net.source_side(S);
    states.assign(inst_.n, NodeState::Prune);
    for (std::size_t i = 0; i < inst_.n; ++i) {
      if (side[v(i)])
        states[i] = NodeState::Compute;
      else if (side[a(i)])
        states[i] = NodeState::Load;
    }
    return cut;
  }

 private:
  const Dag& dag_;
  const Instance& inst_;
  std::vector<MaxFlow::Capacity> compute_cap_;
  std::vector<MaxFlow::Capacity> load_cap_;
  MaxFlow::Capacity inf_ = 0;
};

// Next assignment in odometer order; false after the last one.
bool advance(std::vector<NodeState>& states) {
  for (std::size_t k = states.size(); k-- > 0;) {
    if (states[k] != NodeState::Compute) {
      states[k] = static_cast<NodeState>(static_cast<int>(states[k]) + 1);
      return true;
    }
    states[k] = NodeState::Prune;
  }
  return false;
}

}  // namespace

Micros plan_cost_micros(const StateMap& states, const CostMap& costs) {
  Micros total = 0;
  for (const auto& [name, s] : states) {
    if (s == NodeState::Prune) continue;
    const CostRecord& c = cost_of(costs, name);
    if (s == NodeState::Compute) {
      total += to_micros(c.compute_seconds).value();
    } else {
      auto l = to_micros(c.load_seconds);
      if (!l) throw InfiniteCost("operator '" + name + "' is planned as load but has no cached copy");
      total += *l;
    }
  }
  return total;
}

double plan_cost(const StateMap& states, const CostMap& costs) {
  double total = 0.0;
  for (const auto& [name, s] : states) {
    if (s == NodeState::Prune) continue;
    const CostRecord& c = cost_of(costs, name);
    if (s == NodeState::Compute) {
      total += c.compute_seconds;
    } else {
      if (!c.cached()) throw InfiniteCost("operator '" + name + "' is planned as load but has no cached copy");
      total += c.load_seconds;
    }
  }
  return total;
}

ExecutionPlan assign_states_optimal(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                    const NameSet& sinks) {
  const Instance inst(dag, costs, mandatory, sinks);
  const StateNetwork network(dag, inst);
  using Fix = StateNetwork::Fix;

  std::vector<Fix> fixes(inst.n, Fix::Free);
  std::vector<NodeState> current;
  const auto best = network.solve(fixes, current);
  if (!best) throw std::logic_error("planning network is infeasible");

  // Walk nodes in name order and pin each to the smallest state that keeps the
  // objective optimal. `current` is always an optimal assignment consistent
  // with the pins so far, so its own choice can be accepted without a probe
  // when it is already the smallest candidate left.
  std::vector<NodeState> probe;
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (NodeState candidate : {NodeState::Prune, NodeState::Load, NodeState::Compute}) {
      if (candidate == current[i]) {
        fixes[i] = static_cast<Fix>(static_cast<int>(candidate) + 1);
        break;
      }
      if (candidate == NodeState::Load && !inst.load[i]) continue;
      if (candidate != NodeState::Compute && inst.mandatory[i]) continue;
      if (candidate == NodeState::Prune && inst.sink[i]) continue;
      fixes[i] = static_cast<Fix>(static_cast<int>(candidate) + 1);
      auto value = network.solve(fixes, probe);
      if (value && *value == *best) {
        current = probe;
        break;
      }
      fixes[i] = Fix::Free;
    }
  }

  ExecutionPlan plan = make_plan(dag, costs, current);
  if (auto v = plan_violations(dag, costs, mandatory, sinks, plan); !v.empty())
    throw std::logic_error("optimal planner produced an illegal plan: " + v.front());
  return plan;
}

ExecutionPlan assign_states_bruteforce(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                       const NameSet& sinks) {
  if (dag.size() > kBruteforceMaxNodes)
    throw TooLarge("exhaustive planning supports at most " + std::to_string(kBruteforceMaxNodes) +
                   " operators, got " + std::to_string(dag.size()));
  const Instance inst(dag, costs, mandatory, sinks);

  // Odometer over {Prune, Load, Compute}^n with the first name as the most
  // significant digit: visiting order is the lexicographic tie-break order,
  // so keeping the first strict minimum of (cost, #compute) implements it.
  std::vector<NodeState> states(inst.n, NodeState::Prune);
  std::optional<std::vector<NodeState>> best;
  Micros best_cost = 0;
  std::size_t best_computes = 0;
  while (true) {
    if (legal(dag, inst, states)) {
      const Micros cost = objective(inst, states);
      std::size_t computes = 0;
      for (auto s : states) computes += (s == NodeState::Compute);
      if (!best || cost < best_cost || (cost == best_cost && computes < best_computes)) {
        best = states;
        best_cost = cost;
        best_computes = computes;
      }
    }
    if (!advance(states)) break;
  }
  if (!best) throw std::logic_error("no legal assignment exists");
  return make_plan(dag, costs, *best);
}

std::vector<std::string> plan_violations(const Dag& dag, const CostMap& costs, const NameSet& mandatory,
                                         const NameSet& sinks, const ExecutionPlan& plan) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const std::string& name = dag.name(i);
    auto it = plan.states.find(name);
    if (it == plan.states.end()) {
      out.push_back(name + ": no state assigned");
      continue;
    }
    const NodeState s = it->second;
    auto cost = costs.find(name);
    if (s == NodeState::Load && (cost == costs.end() || !cost->second.cached()))
      out.push_back(name + ": loaded without a cached copy");
    if (mandatory.contains(name) && s != NodeState::Compute)
      out.push_back(name + ": must be recomputed but is " + std::string(to_string(s)));
    if (sinks.contains(name) && s == NodeState::Prune) out.push_back(name + ": output is pruned");
    if (s == NodeState::Compute) {
      for (auto p : dag.parents(i)) {
        auto ps = plan.states.find(dag.name(p));
        if (ps != plan.states.end() && ps->second == NodeState::Prune)
          out.push_back(name + ": computed with pruned parent " + dag.name(p));
      }
    }
  }
  if (plan.states.size() != dag.size()) out.push_back("plan covers operators outside the graph");
  try {
    if (out.empty() && plan_cost_micros(plan.states, costs) != plan.total_cost_micros)
      out.push_back("total cost does not match the objective");
  } catch (const Error& e) {
    out.push_back(e.what());
  }
  return out;
}

}  // namespace iterflow
