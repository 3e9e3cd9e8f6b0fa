#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>

namespace iterflow {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Per-node cost inputs. load_seconds is +inf exactly when no cached copy exists.
struct CostRecord {
  double compute_seconds = 0.0;
  double load_seconds = kInfinity;
  std::int64_t output_bytes = 0;

  bool cached() const noexcept { return std::isfinite(load_seconds); }
  bool operator==(const CostRecord&) const = default;
};

using CostMap = std::map<std::string, CostRecord, std::less<>>;

// Costs are compared on an integer microsecond grid so that two planners agree
// exactly. Infinite (uncached) maps to nullopt.
using Micros = std::int64_t;

inline std::optional<Micros> to_micros(double seconds) {
  if (!std::isfinite(seconds)) return std::nullopt;
  return static_cast<Micros>(std::llround(seconds * 1e6));
}

inline double from_micros(Micros us) { return static_cast<double>(us) / 1e6; }

}  // namespace iterflow
