#include "iterflow/materialization.hpp"

#include <cmath>

#include "iterflow/error.hpp"

namespace iterflow {

std::string_view to_string(PolicyDirection d) noexcept {
  return d == PolicyDirection::PaperLiteral ? "paper-literal" : "savings-positive";
}

PolicyDirection parse_policy_direction(std::string_view text) {
  if (text == "savings-positive") return PolicyDirection::SavingsPositive;
  if (text == "paper-literal") return PolicyDirection::PaperLiteral;
  throw ConfigError("unknown policy direction '" + std::string(text) +
                    "' (expected savings-positive or paper-literal)");
}

CostLookup lookup_in(const CostMap& costs) {
  return [&costs](std::string_view name) -> const CostRecord* {
    auto it = costs.find(name);
    return it == costs.end() ? nullptr : &it->second;
  };
}

namespace {

double compute_of(const Dag& dag, std::size_t i, const CostLookup& costs) {
  const CostRecord* rec = costs(dag.name(i));
  if (!rec || !std::isfinite(rec->compute_seconds)) throw UnknownCost(dag.name(i));
  return rec->compute_seconds;
}

}  // namespace

double r_value(const Dag& dag, std::size_t node, const CostLookup& costs) {
  double chain = compute_of(dag, node, costs);
  for (auto a : dag.ancestors(node)) chain += compute_of(dag, a, costs);
  const CostRecord* self = costs(dag.name(node));
  if (!std::isfinite(self->load_seconds)) throw UnknownCost(dag.name(node));
  return chain - 2.0 * self->load_seconds;
}

double r_value(const Dag& dag, std::string_view node, const CostMap& costs) {
  return r_value(dag, dag.require_index(node), lookup_in(costs));
}

MaterializationDecision decide(const Dag& dag, std::size_t node, const CostLookup& costs,
                               StorageBudget& budget, PolicyDirection direction) {
  MaterializationDecision d;
  d.node = dag.name(node);
  d.r_value = r_value(dag, node, costs);
  const bool wanted =
      direction == PolicyDirection::SavingsPositive ? d.r_value > 0.0 : d.r_value < 0.0;
  const std::int64_t bytes = costs(d.node)->output_bytes;
  if (wanted && budget.fits(bytes)) {
    d.materialize = true;
    d.bytes_charged = bytes;
    budget.used_bytes += bytes;
  }
  return d;
}

std::string policy_label(const PolicyConfig& policy) {
  if (auto* e = std::get_if<EnginePolicy>(&policy))
    return e->direction == PolicyDirection::SavingsPositive ? "engine" : "engine-paper-literal";
  if (std::holds_alternative<MaterializeAll>(policy)) return "materialize-all";
  return "materialize-none";
}

PolicyConfig parse_policy(std::string_view text) {
  if (text == "engine") return EnginePolicy{PolicyDirection::SavingsPositive};
  if (text == "engine-paper-literal") return EnginePolicy{PolicyDirection::PaperLiteral};
  if (text == "materialize-all" || text == "all") return MaterializeAll{};
  if (text == "materialize-none" || text == "none") return MaterializeNone{};
  throw ConfigError("unknown policy '" + std::string(text) +
                    "' (expected engine, engine-paper-literal, materialize-all, materialize-none)");
}

}  // namespace iterflow
