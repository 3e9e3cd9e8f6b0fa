#include "iterflow/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>

#include "iterflow/error.hpp"
#include "json.hpp"

namespace iterflow {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

[[noreturn]] void syntax(const std::string& where, const std::string& what) {
  throw SyntaxError(where + ": " + what);
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) syntax(where, "expected an object");
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      syntax(where, "unknown key '" + key + "'");
  }
}

const json& required(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) syntax(where, std::string("missing key '") + key + "'");
  return *it;
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) syntax(where, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> as_string_list(const json& j, const std::string& where) {
  if (!j.is_array()) syntax(where, "expected an array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(as_string(e, where));
  return out;
}

double as_nonnegative(const json& j, const std::string& where) {
  if (!j.is_number()) syntax(where, "expected a number");
  double v = j.get<double>();
  if (!(v >= 0.0) || !std::isfinite(v)) syntax(where, "expected a finite nonnegative number");
  return v;
}

Action parse_action(const json& j, const std::string& where) {
  require_object(j, where);
  const std::string type = as_string(required(j, "type", where), where + ".type");
  if (type == "command") {
    check_keys(j, {"type", "argv", "inputs", "output", "estimate_seconds"}, where);
    CommandAction a;
    a.argv = as_string_list(required(j, "argv", where), where + ".argv");
    if (a.argv.empty()) syntax(where + ".argv", "must not be empty");
    if (auto it = j.find("inputs"); it != j.end())
      a.inputs = as_string_list(*it, where + ".inputs");
    a.output = as_string(required(j, "output", where), where + ".output");
    if (a.output.empty()) syntax(where + ".output", "must not be empty");
    if (auto it = j.find("estimate_seconds"); it != j.end())
      a.estimate_seconds = as_nonnegative(*it, where + ".estimate_seconds");
    return a;
  }
  if (type == "simulated") {
    check_keys(j, {"type", "compute_seconds", "output_bytes"}, where);
    SimulatedAction a;
    a.compute_seconds = as_nonnegative(required(j, "compute_seconds", where), where + ".compute_seconds");
    const json& bytes = required(j, "output_bytes", where);
    if (!bytes.is_number_integer() || bytes.get<std::int64_t>() < 0)
      syntax(where + ".output_bytes", "expected a nonnegative integer");
    a.output_bytes = bytes.get<std::int64_t>();
    return a;
  }
  syntax(where + ".type", "expected \"command\" or \"simulated\", got \"" + type + "\"");
}

OperatorNode parse_node(const json& j, std::size_t index) {
  const std::string where = "nodes[" + std::to_string(index) + "]";
  require_object(j, where);
  check_keys(j, {"name", "kind", "action", "parents", "sources", "env_fingerprint"}, where);
  OperatorNode n;
  n.name = as_string(required(j, "name", where), where + ".name");
  if (n.name.empty()) syntax(where + ".name", "must not be empty");
  const std::string named = "node '" + n.name + "'";
  if (auto it = j.find("kind"); it != j.end()) n.kind = as_string(*it, named + ".kind");
  n.action = parse_action(required(j, "action", named), named + ".action");
  if (auto it = j.find("parents"); it != j.end()) n.parents = as_string_list(*it, named + ".parents");
  if (auto it = j.find("sources"); it != j.end()) n.sources = as_string_list(*it, named + ".sources");
  if (auto it = j.find("env_fingerprint"); it != j.end())
    n.env_fingerprint = as_string(*it, named + ".env_fingerprint");
  return n;
}

ordered_json action_to_json(const Action& action) {
  return std::visit(
      [](const auto& a) -> ordered_json {
        using T = std::decay_t<decltype(a)>;
        ordered_json j;
        if constexpr (std::is_same_v<T, CommandAction>) {
          j["type"] = "command";
          j["argv"] = a.argv;
          j["inputs"] = a.inputs;
          j["output"] = a.output;
          if (a.estimate_seconds) j["estimate_seconds"] = *a.estimate_seconds;
        } else {
          j["type"] = "simulated";
          j["compute_seconds"] = a.compute_seconds;
          j["output_bytes"] = a.output_bytes;
        }
        return j;
      },
      action);
}

}  // namespace

CycleDetected::CycleDetected(std::vector<std::string> cycle)
    : SpecError("cycle detected: " + join(cycle, " -> ") +
                (cycle.empty() ? "" : " -> " + cycle.front())),
      cycle_(std::move(cycle)) {}

const OperatorNode* WorkflowSpec::find(std::string_view name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

OperatorNode* WorkflowSpec::find(std::string_view name) {
  for (auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

void validate_workflow(const WorkflowSpec& spec) {
  std::map<std::string, const OperatorNode*, std::less<>> by_name;
  for (const auto& n : spec.nodes) {
    if (!by_name.emplace(n.name, &n).second) throw DuplicateName(n.name);
  }
  for (const auto& n : spec.nodes) {
    std::set<std::string_view> seen;
    for (const auto& p : n.parents) {
      if (!by_name.contains(p)) throw UnknownParent(n.name, p);
      if (!seen.insert(p).second)
        throw SpecError("operator '" + n.name + "' lists parent '" + p + "' twice");
    }
  }
  if (spec.outputs.empty()) throw NoOutputs("workflow declares no outputs");
  for (const auto& o : spec.outputs) {
    if (!by_name.contains(o)) throw NoOutputs("output '" + o + "' is not a defined operator");
  }

  // Cycle search: DFS over parent->child edges, visiting in name order so the
  // reported cycle is deterministic.
  std::map<std::string_view, std::vector<std::string_view>> children;
  for (const auto& n : spec.nodes)
    for (const auto& p : n.parents) children[p].push_back(n.name);
  for (auto& [_, c] : children) std::sort(c.begin(), c.end());

  enum class Mark { White, Grey, Black };
  std::map<std::string_view, Mark> mark;
  for (const auto& [name, _] : by_name) mark[name] = Mark::White;
  std::vector<std::string_view> stack;

  std::function<void(std::string_view)> visit = [&](std::string_view u) {
    mark[u] = Mark::Grey;
    stack.push_back(u);
    for (auto v : children[u]) {
      if (mark[v] == Mark::Grey) {
        auto from = std::find(stack.begin(), stack.end(), v);
        throw CycleDetected(std::vector<std::string>(from, stack.end()));
      }
      if (mark[v] == Mark::White) visit(v);
    }
    stack.pop_back();
    mark[u] = Mark::Black;
  };
  for (const auto& [name, _] : by_name)
    if (mark[name] == Mark::White) visit(name);
}

WorkflowSpec parse_workflow(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SyntaxError(std::string("malformed workflow document: ") + e.what());
  }
  require_object(doc, "workflow");
  check_keys(doc, {"version", "nodes", "outputs"}, "workflow");

  WorkflowSpec spec;
  const json& version = required(doc, "version", "workflow");
  if (!version.is_number_integer()) syntax("workflow.version", "expected an integer");
  spec.version = version.get<int>();
  if (spec.version != kWorkflowFormatVersion)
    syntax("workflow.version", "unsupported version " + std::to_string(spec.version));

  const json& nodes = required(doc, "nodes", "workflow");
  if (!nodes.is_array()) syntax("workflow.nodes", "expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) spec.nodes.push_back(parse_node(nodes[i], i));

  const json& outputs = required(doc, "outputs", "workflow");
  spec.outputs = as_string_list(outputs, "workflow.outputs");

  validate_workflow(spec);
  return spec;
}

WorkflowSpec load_workflow_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read workflow spec: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_workflow(buf.str());
}

std::string serialize_workflow(const WorkflowSpec& spec) {
  ordered_json doc;
  doc["version"] = spec.version;
  ordered_json nodes = ordered_json::array();
  for (const auto& n : spec.nodes) {
    ordered_json j;
    j["name"] = n.name;
    j["kind"] = n.kind;
    j["action"] = action_to_json(n.action);
    j["parents"] = n.parents;
    j["sources"] = n.sources;
    if (n.env_fingerprint) j["env_fingerprint"] = *n.env_fingerprint;
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["outputs"] = spec.outputs;
  return doc.dump(2) + "\n";
}

std::vector<std::string> topological_order(const WorkflowSpec& spec) {
  const Dag dag = Dag::from_spec(spec);
  std::vector<std::string> out;
  out.reserve(dag.size());
  for (auto i : dag.topological_order()) out.push_back(dag.name(i));
  return out;
}

PruneResult prune_dead_operators(const WorkflowSpec& spec) {
  std::map<std::string_view, const OperatorNode*> by_name;
  for (const auto& n : spec.nodes) by_name[n.name] = &n;

  std::set<std::string_view> live;
  std::deque<std::string_view> frontier(spec.outputs.begin(), spec.outputs.end());
  while (!frontier.empty()) {
    auto name = frontier.front();
    frontier.pop_front();
    if (!live.insert(name).second) continue;
    for (const auto& p : by_name.at(name)->parents) frontier.push_back(p);
  }

  PruneResult result;
  result.spec.version = spec.version;
  result.spec.outputs = spec.outputs;
  for (const auto& n : spec.nodes) {
    if (live.contains(n.name))
      result.spec.nodes.push_back(n);
    else
      result.removed.insert(n.name);
  }
  return result;
}

// ---- Dag ---------------------------------------------------------------------

Dag::Dag(std::vector<std::string> names,
         const std::vector<std::pair<std::string, std::string>>& edges)
    : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) throw DuplicateName(names_[i]);
  }
  parents_.resize(names_.size());
  children_.resize(names_.size());
  for (const auto& [parent, child] : edges) {
    auto p = index_of(parent);
    auto c = index_of(child);
    if (!c) throw SpecError("edge references unknown operator '" + child + "'");
    if (!p) throw UnknownParent(child, parent);
    parents_[*c].push_back(*p);
    children_[*p].push_back(*c);
  }
  for (auto& v : parents_) std::sort(v.begin(), v.end());
  for (auto& v : children_) std::sort(v.begin(), v.end());
}

Dag Dag::from_spec(const WorkflowSpec& spec) {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& n : spec.nodes) {
    names.push_back(n.name);
    for (const auto& p : n.parents) edges.emplace_back(p, n.name);
  }
  return Dag(std::move(names), edges);
}

std::optional<std::size_t> Dag::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Dag::require_index(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw SpecError("unknown operator '" + std::string(name) + "'");
  return *i;
}

namespace {

std::vector<std::size_t> reach(std::size_t start, const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<std::size_t> stack(adj[start].begin(), adj[start].end());
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    if (seen[u]) continue;
    seen[u] = true;
    stack.insert(stack.end(), adj[u].begin(), adj[u].end());
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

}  // namespace

std::vector<std::size_t> Dag::ancestors(std::size_t i) const { return reach(i, parents_); }
std::vector<std::size_t> Dag::descendants(std::size_t i) const { return reach(i, children_); }

std::vector<std::size_t> Dag::topological_order() const {
  std::vector<std::size_t> indegree(size());
  for (std::size_t i = 0; i < size(); ++i) indegree[i] = parents_[i].size();
  // Indices are in name order, so a min-heap on index is a min-heap on name.
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < size(); ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(size());
  while (!ready.empty()) {
    auto u = ready.top();
    ready.pop();
    order.push_back(u);
    for (auto c : children_[u])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (order.size() != size()) throw SpecError("graph contains a cycle");
  return order;
}

}  // namespace iterflow
