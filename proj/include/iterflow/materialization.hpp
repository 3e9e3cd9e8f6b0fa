#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <variant>

#include "iterflow/cost.hpp"
#include "iterflow/workflow.hpp"

namespace iterflow {

// Which sign of the savings estimate triggers materialization.
enum class PolicyDirection {
  SavingsPositive,  // materialize when r > 0 (default)
  PaperLiteral,     // materialize when r < 0
};

std::string_view to_string(PolicyDirection d) noexcept;
PolicyDirection parse_policy_direction(std::string_view text);

inline constexpr double kDefaultDiskBandwidthBytesPerSecond = 100e6;

struct StorageBudget {
  std::int64_t capacity_bytes = std::numeric_limits<std::int64_t>::max();
  std::int64_t used_bytes = 0;

  std::int64_t remaining() const noexcept { return capacity_bytes - used_bytes; }
  bool fits(std::int64_t bytes) const noexcept { return bytes >= 0 && bytes <= remaining(); }
};

struct MaterializationDecision {
  std::string node;
  double r_value = 0.0;
  bool materialize = false;
  std::int64_t bytes_charged = 0;
};

// Cost lookup used at decision time. Returns nullptr for names without a
// record. decide() only ever asks for the node itself and its ancestors.
using CostLookup = std::function<const CostRecord*(std::string_view)>;

CostLookup lookup_in(const CostMap& costs);

// (c_i + sum of c_j over all ancestors j) - 2 l_i. Throws UnknownCost when a
// compute cost or the node's load estimate is missing.
double r_value(const Dag& dag, std::size_t node, const CostLookup& costs);
double r_value(const Dag& dag, std::string_view node, const CostMap& costs);

// Online decision for a node that has just finished computing. Charges the
// budget when it says yes; never throws for lack of space.
MaterializationDecision decide(const Dag& dag, std::size_t node, const CostLookup& costs,
                               StorageBudget& budget, PolicyDirection direction);

// Load-time estimate for an output that has no measured load yet.
inline double estimate_load_seconds(std::int64_t output_bytes,
                                    double bandwidth = kDefaultDiskBandwidthBytesPerSecond) {
  return static_cast<double>(output_bytes) / bandwidth;
}

// Run-level choice of what to persist.
struct EnginePolicy {
  PolicyDirection direction = PolicyDirection::SavingsPositive;
};
struct MaterializeAll {};
struct MaterializeNone {};
using PolicyConfig = std::variant<EnginePolicy, MaterializeAll, MaterializeNone>;

std::string policy_label(const PolicyConfig& policy);
PolicyConfig parse_policy(std::string_view text);

}  // namespace iterflow
