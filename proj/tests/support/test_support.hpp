#pragma once

#include <stdlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iterflow/cost.hpp"
#include "iterflow/planner.hpp"
#include "iterflow/signature.hpp"
#include "iterflow/workflow.hpp"

namespace iterflow::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "iterflow-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Snapshot of every regular file under a directory: relative path -> content hash.
inline std::vector<std::pair<std::string, std::string>> tree_snapshot(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), hash_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

inline OperatorNode simulated_node(std::string name, double compute_seconds, std::int64_t bytes,
                                   std::vector<std::string> parents = {}, std::string kind = "") {
  OperatorNode n;
  n.name = std::move(name);
  n.kind = std::move(kind);
  n.action = SimulatedAction{compute_seconds, bytes};
  n.parents = std::move(parents);
  return n;
}

// A random planning instance: DAG, integer costs, cache availability, and
// mandatory / sink sets.
struct PlanningInstance {
  Dag dag;
  CostMap costs;
  NameSet mandatory;
  NameSet sinks;
  std::vector<std::pair<std::string, std::string>> edges;
};

inline std::string node_name(std::size_t i) {
  std::string s = "n";
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

// Node positions in the generated topological order are shuffled against the
// name order so that index order and topological order differ.
inline PlanningInstance random_instance(std::mt19937_64& rng, std::size_t max_nodes) {
  auto uniform = [&](std::uint64_t lo, std::uint64_t hi) { return lo + rng() % (hi - lo + 1); };
  auto chance = [&](double p) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p; };

  const std::size_t n = uniform(1, max_nodes);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(node_name(i));
  std::vector<std::string> topo = names;
  for (std::size_t i = n; i > 1; --i) std::swap(topo[i - 1], topo[rng() % i]);

  PlanningInstance inst;
  const double density = 0.15 + 0.35 * static_cast<double>(rng() % 100) / 100.0;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (chance(density)) inst.edges.emplace_back(topo[i], topo[j]);
  inst.dag = Dag(names, inst.edges);

  const double cached_p = static_cast<double>(rng() % 101) / 100.0;
  for (const auto& name : names) {
    CostRecord c;
    c.compute_seconds = static_cast<double>(uniform(0, 20));
    if (chance(cached_p)) c.load_seconds = static_cast<double>(uniform(0, 20));
    c.output_bytes = static_cast<std::int64_t>(uniform(0, 1000));
    inst.costs.emplace(name, c);
    if (chance(0.15)) inst.mandatory.insert(name);
    if (chance(0.3)) inst.sinks.insert(name);
  }
  if (inst.sinks.empty()) inst.sinks.insert(names[rng() % n]);
  return inst;
}

inline WorkflowSpec spec_from_instance(const PlanningInstance& inst) {
  WorkflowSpec spec;
  for (const auto& name : inst.dag.names()) {
    const auto& c = inst.costs.at(name);
    OperatorNode node = simulated_node(name, c.compute_seconds, c.output_bytes);
    for (const auto& [p, ch] : inst.edges)
      if (ch == name) node.parents.push_back(p);
    spec.nodes.push_back(std::move(node));
  }
  spec.outputs.assign(inst.sinks.begin(), inst.sinks.end());
  return spec;
}

}  // namespace iterflow::testing
