#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace iterflow {

// Dinic's algorithm on an integer-capacity network.
class MaxFlow {
 public:
  using Capacity = std::int64_t;

  explicit MaxFlow(std::size_t vertices);

  void add_edge(std::size_t from, std::size_t to, Capacity capacity);
  // Stops early once the flow reaches `limit`.
  Capacity solve(std::size_t source, std::size_t sink,
                 Capacity limit = std::numeric_limits<Capacity>::max());

  // Valid after solve(): vertices reachable from the source in the residual
  // graph, i.e. the source side of a minimum cut.
  std::vector<bool> source_side(std::size_t source) const;

  std::size_t vertices() const noexcept { return adj_.size(); }

 private:
  struct Edge {
    std::size_t to;
    std::size_t rev;
    Capacity residual;
  };

  bool build_levels(std::size_t source, std::size_t sink);
  Capacity augment(std::size_t u, std::size_t sink, Capacity limit);

  std::vector<std::vector<Edge>> adj_;
  std::vector<int> level_;
  std::vector<std::size_t> cursor_;
};

}  // namespace iterflow
