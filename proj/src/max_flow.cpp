#include "iterflow/max_flow.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace iterflow {

MaxFlow::MaxFlow(std::size_t vertices) : adj_(vertices) {}

void MaxFlow::add_edge(std::size_t from, std::size_t to, Capacity capacity) {
  if (capacity < 0) throw std::invalid_argument("negative capacity");
  adj_[from].push_back(Edge{to, adj_[to].size(), capacity});
  adj_[to].push_back(Edge{from, adj_[from].size() - 1, 0});
}

bool MaxFlow::build_levels(std::size_t source, std::size_t sink) {
  level_.assign(adj_.size(), -1);
  std::queue<std::size_t> q;
  level_[source] = 0;
  q.push(source);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (const auto& e : adj_[u]) {
      if (e.residual > 0 && level_[e.to] < 0) {
        level_[e.to] = level_[u] + 1;
        q.push(e.to);
      }
    }
  }
  return level_[sink] >= 0;
}

MaxFlow::Capacity MaxFlow::augment(std::size_t u, std::size_t sink, Capacity limit) {
  if (u == sink) return limit;
  for (auto& i = cursor_[u]; i < adj_[u].size(); ++i) {
    Edge& e = adj_[u][i];
    if (e.residual <= 0 || level_[e.to] != level_[u] + 1) continue;
    Capacity pushed = augment(e.to, sink, std::min(limit, e.residual));
    if (pushed > 0) {
      e.residual -= pushed;
      adj_[e.to][e.rev].residual += pushed;
      return pushed;
    }
  }
  return 0;
}

MaxFlow::Capacity MaxFlow::solve(std::size_t source, std::size_t sink, Capacity limit) {
  Capacity total = 0;
  while (total < limit && build_levels(source, sink)) {
    cursor_.assign(adj_.size(), 0);
    while (total < limit) {
      Capacity f = augment(source, sink, limit - total);
      if (f == 0) break;
      total += f;
    }
  }
  return total;
}

std::vector<bool> MaxFlow::source_side(std::size_t source) const {
  std::vector<bool> seen(adj_.size(), false);
  std::vector<std::size_t> stack{source};
  seen[source] = true;
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (const auto& e : adj_[u]) {
      if (e.residual > 0 && !seen[e.to]) {
        seen[e.to] = true;
        stack.push_back(e.to);
      }
    }
  }
  return seen;
}

}  // namespace iterflow
