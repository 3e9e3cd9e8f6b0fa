#include "iterflow/executor.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <map>

#include "iterflow/error.hpp"
#include "iterflow/report.hpp"
#include "json.hpp"

namespace iterflow {

namespace fs = std::filesystem;

std::string_view to_string(ClockMode m) noexcept { return m == ClockMode::Real ? "real" : "simulated"; }

ClockMode parse_clock_mode(std::string_view text) {
  if (text == "real") return ClockMode::Real;
  if (text == "simulated") return ClockMode::Simulated;
  throw ConfigError("unknown clock mode '" + std::string(text) + "' (expected real or simulated)");
}

std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::Ok: return "ok";
    case Outcome::Pruned: return "pruned";
    case Outcome::Skipped: return "skipped";
    case Outcome::Failed: return "failed";
    case Outcome::LoadFallback: return "load-fallback";
  }
  return "?";
}

const NodeRecord* RunReport::find(std::string_view name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

ClockMode resolve_clock_mode(const WorkflowSpec& spec, std::optional<ClockMode> requested) {
  if (requested) return *requested;
  for (const auto& n : spec.nodes)
    if (std::holds_alternative<CommandAction>(n.action)) return ClockMode::Real;
  return ClockMode::Simulated;
}

CostMap assemble_costs(const WorkflowSpec& spec, const SignatureMap& signatures,
                       const CacheManifest& manifest, const CostModel& model) {
  CostMap costs;
  for (const auto& node : spec.nodes) {
    CostRecord c;
    const CostRecord* history = nullptr;
    if (auto h = manifest.cost_history.find(node.name); h != manifest.cost_history.end()) history = &h->second;

    if (const auto* sim = std::get_if<SimulatedAction>(&node.action)) {
      c.compute_seconds = sim->compute_seconds;
      c.output_bytes = sim->output_bytes;
    } else {
      const auto& cmd = std::get<CommandAction>(node.action);
      if (history && std::isfinite(history->compute_seconds))
        c.compute_seconds = history->compute_seconds;
      else
        c.compute_seconds = cmd.estimate_seconds.value_or(model.default_command_seconds);
      if (history) c.output_bytes = history->output_bytes;
    }

    const CacheEntry* entry = nullptr;
    if (auto s = signatures.find(node.name); s != signatures.end()) entry = manifest.find(s->second);
    if (entry) {
      c.output_bytes = entry->output_bytes;
      if (entry->measured_load_seconds)
        c.load_seconds = *entry->measured_load_seconds;
      else if (history && history->cached())
        c.load_seconds = history->load_seconds;
      else
        c.load_seconds = estimate_load_seconds(entry->output_bytes, model.disk_bandwidth);
    }
    costs.emplace(node.name, c);
  }
  return costs;
}

namespace {

std::string substitute(std::string arg, const std::string& key, const std::string& value) {
  for (std::size_t pos = arg.find(key); pos != std::string::npos; pos = arg.find(key, pos + value.size()))
    arg.replace(pos, key.size(), value);
  return arg;
}

// Runs argv with the workspace as working directory. Child stdout goes to our
// stderr so that reports on stdout stay machine-readable.
int run_command(const CommandAction& cmd, const fs::path& workspace) {
  std::vector<std::string> args;
  const std::string ws = fs::absolute(workspace).string();
  for (const auto& a : cmd.argv) args.push_back(substitute(substitute(a, "{output}", cmd.output), "{workspace}", ws));
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw IoError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    if (::chdir(ws.c_str()) != 0) _exit(126);
    ::dup2(STDERR_FILENO, STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    _exit(127);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw IoError(std::string("waitpid failed: ") + std::strerror(errno));
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunReport execute(const WorkflowSpec& spec, const ExecutionPlan& plan, const SignatureMap& signatures,
                  const CostMap& planning_costs, CacheStore& cache, const PolicyConfig& policy,
                  const ExecuteOptions& options) {
  const Dag dag = Dag::from_spec(spec);
  std::map<std::string_view, const OperatorNode*> by_name;
  for (const auto& n : spec.nodes) by_name[n.name] = &n;

  RunReport report;
  report.clock_mode = options.clock;
  report.policy = policy_label(policy);
  report.plan = plan;

  StorageBudget budget;
  if (options.budget_bytes) budget.capacity_bytes = *options.budget_bytes;
  budget.used_bytes = std::min(budget.capacity_bytes, cache.manifest().total_bytes());

  // Costs visible to the materialization policy: measured values for what ran
  // this iteration, planner values for everything else.
  CostMap decision_costs = planning_costs;
  std::vector<bool> available(dag.size(), false);
  const bool simulated_clock = options.clock == ClockMode::Simulated;

  auto notify = [&](ExecEvent e, const std::string& name) {
    if (options.observer) options.observer(e, name);
  };
  auto load_estimate = [&](const std::string& name, std::int64_t bytes) {
    const CostRecord& planned = planning_costs.at(name);
    if (planned.cached()) return planned.load_seconds;
    auto h = cache.manifest().cost_history.find(name);
    if (h != cache.manifest().cost_history.end() && h->second.cached()) return h->second.load_seconds;
    return estimate_load_seconds(bytes, options.cost_model.disk_bandwidth);
  };

  for (auto i : dag.topological_order()) {
    const std::string& name = dag.name(i);
    const OperatorNode& node = *by_name.at(name);
    const auto* cmd = std::get_if<CommandAction>(&node.action);
    const NodeSignature& sig = signatures.at(name);

    NodeRecord rec;
    rec.name = name;
    rec.kind = node.kind;
    rec.state = plan.state_of(name);
    rec.signature = sig.value;

    const bool parents_ready = [&] {
      for (auto p : dag.parents(i))
        if (!available[p]) return false;
      return true;
    }();

    if (rec.state == NodeState::Prune) {
      rec.outcome = Outcome::Pruned;
      report.nodes.push_back(std::move(rec));
      continue;
    }

    bool compute = rec.state == NodeState::Compute;
    if (rec.state == NodeState::Load) {
      try {
        LoadOptions lo;
        if (cmd) lo.copy_to = options.workspace / cmd->output;
        if (simulated_clock) lo.charged_seconds = planning_costs.at(name).load_seconds;
        const PayloadHandle h = cache.get(sig, lo);
        rec.seconds = h.load_seconds;
        rec.outcome = Outcome::Ok;
        report.totals.load_seconds += rec.seconds;
        available[i] = true;
      } catch (const Error& e) {
        if (parents_ready) {
          compute = true;
          rec.outcome = Outcome::LoadFallback;
          rec.message = e.what();
        } else {
          rec.outcome = Outcome::Failed;
          rec.message = std::string("load failed: ") + e.what();
          report.failures.push_back(name + ": " + rec.message);
        }
      }
    }

    if (compute) {
      if (!parents_ready) {
        rec.outcome = Outcome::Skipped;
        rec.message = "an input is unavailable";
        report.nodes.push_back(std::move(rec));
        continue;
      }
      notify(ExecEvent::ComputeStart, name);
      std::int64_t bytes = 0;
      if (cmd) {
        const auto start = std::chrono::steady_clock::now();
        const int code = run_command(*cmd, options.workspace);
        const double wall = seconds_since(start);
        rec.seconds = simulated_clock ? planning_costs.at(name).compute_seconds : wall;
        std::error_code ec;
        const auto size = fs::file_size(options.workspace / cmd->output, ec);
        if (code != 0 || ec) {
          rec.outcome = Outcome::Failed;
          rec.message = code != 0 ? "exit code " + std::to_string(code) : "declared output was not produced";
          report.failures.push_back(name + ": " + rec.message);
          report.totals.compute_seconds += rec.seconds;
          notify(ExecEvent::ComputeEnd, name);
          report.nodes.push_back(std::move(rec));
          continue;
        }
        bytes = static_cast<std::int64_t>(size);
      } else {
        const auto& sim = std::get<SimulatedAction>(node.action);
        rec.seconds = sim.compute_seconds;
        bytes = sim.output_bytes;
      }
      if (rec.outcome != Outcome::LoadFallback) rec.outcome = Outcome::Ok;
      available[i] = true;
      report.totals.compute_seconds += rec.seconds;
      notify(ExecEvent::ComputeEnd, name);

      CostRecord& mine = decision_costs[name];
      mine.compute_seconds = rec.seconds;
      mine.output_bytes = bytes;
      mine.load_seconds = load_estimate(name, bytes);

      // Online decision: only this node and its ancestors are visible.
      const auto ancestors = dag.ancestors(i);
      CostLookup lookup = [&, i](std::string_view who) -> const CostRecord* {
        auto idx = dag.index_of(who);
        if (!idx || (*idx != i && !std::binary_search(ancestors.begin(), ancestors.end(), *idx))) return nullptr;
        auto it = decision_costs.find(who);
        return it == decision_costs.end() ? nullptr : &it->second;
      };
      if (options.decision_lookup_wrapper) lookup = options.decision_lookup_wrapper(std::move(lookup));

      MaterializationDecision d;
      d.node = name;
      const bool already_cached = cache.find(sig) != nullptr;
      if (const auto* engine = std::get_if<EnginePolicy>(&policy)) {
        if (already_cached) {
          d.r_value = r_value(dag, i, lookup);
        } else {
          d = decide(dag, i, lookup, budget, engine->direction);
        }
      } else {
        d.r_value = r_value(dag, i, lookup);
        if (std::holds_alternative<MaterializeAll>(policy) && !already_cached && budget.fits(bytes)) {
          d.materialize = true;
          d.bytes_charged = bytes;
          budget.used_bytes += bytes;
        }
      }
      notify(ExecEvent::Decided, name);

      if (d.materialize) {
        const auto start = std::chrono::steady_clock::now();
        if (cmd)
          cache.put(sig, name, FilePayload{options.workspace / cmd->output}, rec.seconds);
        else
          cache.put(sig, name, SyntheticPayload{bytes}, rec.seconds);
        rec.materialize_seconds = simulated_clock ? mine.load_seconds : seconds_since(start);
        rec.materialized = true;
        report.totals.materialize_seconds += rec.materialize_seconds;
      }
      rec.decision = std::move(d);
    }
    report.nodes.push_back(std::move(rec));
  }

  report.success = report.failures.empty();
  report.totals.iteration_seconds =
      report.totals.compute_seconds + report.totals.load_seconds + report.totals.materialize_seconds;
  return report;
}

std::vector<std::string> read_run_log(const fs::path& cache_root) {
  std::vector<std::string> lines;
  std::ifstream in(cache_root / "runs.log");
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

namespace {

void append_run_log(const fs::path& cache_root, const std::string& line) {
  const fs::path path = cache_root / "runs.log";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open run log '" + path.string() + "'");
  const std::string text = line + "\n";
  const ssize_t n = ::write(fd, text.data(), text.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(text.size())) throw IoError("short write to run log");
}

}  // namespace

IterationPlan plan_iteration(const WorkflowSpec& input, const RunConfig& config, const CacheManifest& manifest) {
  validate_workflow(input);
  IterationPlan ip;
  PruneResult pruned = prune_dead_operators(input);
  ip.spec = std::move(pruned.spec);
  ip.removed_dead = std::move(pruned.removed);
  ip.clock = resolve_clock_mode(ip.spec, config.clock_mode);
  ip.signatures = compute_signatures(ip.spec, config.workspace);
  ip.changes = diff_iterations(manifest.previous_signatures, ip.signatures);
  ip.costs = assemble_costs(ip.spec, ip.signatures, manifest, config.cost_model);
  const Dag dag = Dag::from_spec(ip.spec);
  const NameSet sinks(ip.spec.outputs.begin(), ip.spec.outputs.end());
  const NameSet mandatory(ip.changes.changed.begin(), ip.changes.changed.end());
  ip.plan = assign_states_optimal(dag, ip.costs, mandatory, sinks);
  for (auto i : dag.topological_order()) ip.order.push_back(dag.name(i));
  return ip;
}

RunReport run_iteration(const WorkflowSpec& input, const RunConfig& config) {
  CacheStore cache =
      CacheStore::open(config.cache_root, config.dry_run ? CacheStore::Mode::ReadOnly : CacheStore::Mode::Writer);
  IterationPlan ip = plan_iteration(input, config, cache.manifest());
  const WorkflowSpec& spec = ip.spec;
  const SignatureMap& signatures = ip.signatures;
  const CostMap& costs = ip.costs;
  const ExecutionPlan& plan = ip.plan;

  // Cumulative time continues from the last logged iteration.
  const auto log = read_run_log(config.cache_root);
  double previous_cumulative = 0.0;
  if (!log.empty()) {
    try {
      previous_cumulative = nlohmann::json::parse(log.back()).at("totals").at("cumulative_seconds").get<double>();
    } catch (const nlohmann::json::exception&) {
      throw SyntaxError("run log is malformed: " + (config.cache_root / "runs.log").string());
    }
  }

  RunReport report;
  if (config.dry_run) {
    report.clock_mode = ip.clock;
    report.policy = policy_label(config.policy);
    report.dry_run = true;
    report.plan = plan;
    for (const auto& name : ip.order) {
      NodeRecord rec;
      rec.name = name;
      rec.kind = spec.find(rec.name)->kind;
      rec.state = plan.state_of(rec.name);
      rec.outcome = rec.state == NodeState::Prune ? Outcome::Pruned : Outcome::Skipped;
      rec.signature = signatures.at(rec.name).value;
      report.nodes.push_back(std::move(rec));
    }
  } else {
    ExecuteOptions options;
    options.clock = ip.clock;
    options.workspace = config.workspace;
    options.budget_bytes = config.budget_bytes;
    options.cost_model = config.cost_model;
    report = execute(spec, plan, signatures, costs, cache, config.policy, options);

    CostMap measured;
    for (const auto& rec : report.nodes) {
      if (!rec.decision) continue;  // only operators that actually computed
      measured[rec.name] = CostRecord{rec.seconds, kInfinity, costs.at(rec.name).output_bytes};
    }
    for (auto& [name, c] : measured) {
      const OperatorNode* node = spec.find(name);
      if (const auto* cmd = std::get_if<CommandAction>(&node->action)) {
        std::error_code ec;
        auto size = fs::file_size(config.workspace / cmd->output, ec);
        if (!ec) c.output_bytes = static_cast<std::int64_t>(size);
      }
    }
    cache.record_iteration(report.success ? &signatures : nullptr, measured);
  }

  report.changes = ip.changes;
  report.removed_dead = ip.removed_dead;
  report.iteration_index = static_cast<int>(log.size()) + 1;
  report.totals.cumulative_seconds = previous_cumulative + report.totals.iteration_seconds;
  if (!config.dry_run) append_run_log(config.cache_root, report_to_json(report));
  return report;
}

RunReport run_iteration(const fs::path& spec_path, const RunConfig& config) {
  RunConfig resolved = config;
  if (resolved.workspace.empty()) resolved.workspace = spec_path.has_parent_path() ? spec_path.parent_path() : ".";
  return run_iteration(load_workflow_file(spec_path.string()), resolved);
}

}  // namespace iterflow
