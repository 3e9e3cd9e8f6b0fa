#include "iterflow/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "iterflow/cache_store.hpp"
#include "iterflow/error.hpp"
#include "iterflow/executor.hpp"
#include "iterflow/report.hpp"
#include "iterflow/simulator.hpp"

namespace iterflow {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCacheEnv = "ITERFLOW_CACHE";
constexpr const char* kDefaultCacheDir = ".iterflow-cache";

struct CommonOptions {
  std::string spec;
  std::string workspace;
  std::string cache;
  std::optional<std::int64_t> budget_bytes;
  std::string policy = "engine";
  std::string direction = "savings-positive";
  std::string clock = "auto";
  double bandwidth = kDefaultDiskBandwidthBytesPerSecond;
  bool json = false;
  bool dry_run = false;
};

void add_cache_option(CLI::App* cmd, std::string& cache) {
  cmd->add_option("--cache", cache, "Cache root (default: $ITERFLOW_CACHE, else <workspace>/.iterflow-cache)");
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_json) {
  cmd->add_option("--spec", o.spec, "Workflow spec file (JSON)")->required();
  cmd->add_option("--workspace", o.workspace, "Directory sources and outputs resolve against (default: spec dir)");
  add_cache_option(cmd, o.cache);
  cmd->add_option("--budget-bytes", o.budget_bytes, "Storage budget for materialized intermediates")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--policy", o.policy, "engine | materialize-all | materialize-none")
      ->check(CLI::IsMember({"engine", "materialize-all", "materialize-none"}));
  cmd->add_option("--policy-direction", o.direction, "savings-positive | paper-literal")
      ->check(CLI::IsMember({"savings-positive", "paper-literal"}));
  cmd->add_option("--clock", o.clock, "auto | real | simulated")->check(CLI::IsMember({"auto", "real", "simulated"}));
  cmd->add_option("--disk-bandwidth", o.bandwidth, "Bytes/second used to estimate load times")
      ->check(CLI::PositiveNumber);
  if (with_json) cmd->add_flag("--json", o.json, "Machine-readable output");
}

fs::path resolve_workspace(const CommonOptions& o) {
  if (!o.workspace.empty()) return o.workspace;
  const fs::path spec(o.spec);
  return spec.has_parent_path() ? spec.parent_path() : fs::path(".");
}

fs::path resolve_cache(const std::string& flag, const fs::path& workspace) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kCacheEnv); env && *env) return env;
  return workspace / kDefaultCacheDir;
}

RunConfig make_config(const CommonOptions& o) {
  RunConfig c;
  c.workspace = resolve_workspace(o);
  c.cache_root = resolve_cache(o.cache, c.workspace);
  c.budget_bytes = o.budget_bytes;
  if (o.policy == "engine")
    c.policy = EnginePolicy{parse_policy_direction(o.direction)};
  else
    c.policy = parse_policy(o.policy);
  c.dry_run = o.dry_run;
  if (o.clock != "auto") c.clock_mode = parse_clock_mode(o.clock);
  c.cost_model.disk_bandwidth = o.bandwidth;
  if (!fs::is_directory(c.workspace)) throw ConfigError("workspace is not a directory: " + c.workspace.string());
  return c;
}

int cmd_run(const CommonOptions& o, std::ostream& out) {
  const RunConfig config = make_config(o);
  const WorkflowSpec spec = load_workflow_file(o.spec);
  const RunReport report = run_iteration(spec, config);
  if (o.json)
    out << report_to_json(report) << '\n';
  else
    out << format_run_report(report);
  return report.success ? kExitOk : kExitOperatorFailure;
}

int cmd_plan(const CommonOptions& o, std::ostream& out) {
  const RunConfig config = make_config(o);
  const WorkflowSpec spec = load_workflow_file(o.spec);
  const CacheStore cache = CacheStore::open(config.cache_root, CacheStore::Mode::ReadOnly);
  const IterationPlan ip = plan_iteration(spec, config, cache.manifest());
  out << (o.json ? plan_to_json(ip.plan, ip.costs, ip.order) : format_plan_table(ip.plan, ip.costs, ip.order));
  return kExitOk;
}

int cmd_diff(const CommonOptions& o, std::ostream& out) {
  const RunConfig config = make_config(o);
  const WorkflowSpec spec = load_workflow_file(o.spec);
  const CacheStore cache = CacheStore::open(config.cache_root, CacheStore::Mode::ReadOnly);
  const IterationPlan ip = plan_iteration(spec, config, cache.manifest());
  out << (o.json ? changes_to_json(ip.changes) : format_changes(ip.changes));
  return kExitOk;
}

int cmd_cache_ls(const fs::path& root, std::ostream& out) {
  const CacheStore cache = CacheStore::open(root, CacheStore::Mode::ReadOnly);
  out << "signature\tnode\tbytes\tcompute_s\tload_s\n";
  for (const auto& [sig, e] : cache.manifest().entries) {
    out << sig << '\t' << e.node_name << '\t' << e.output_bytes << '\t' << format_seconds(e.measured_compute_seconds)
        << '\t' << (e.measured_load_seconds ? format_seconds(*e.measured_load_seconds) : "-") << '\n';
  }
  return kExitOk;
}

int cmd_cache_gc(const fs::path& root, bool keep_latest, std::ostream& out) {
  CacheStore cache = CacheStore::open(root, CacheStore::Mode::Writer);
  for (const auto& f : cache.recovery().removed_temp_files) out << "removed-temp\t" << f << '\n';
  for (const auto& f : cache.recovery().removed_orphans) out << "removed-orphan\t" << f << '\n';
  for (const auto& s : cache.recovery().dropped_entries) out << "dropped-entry\t" << s << '\n';
  if (keep_latest)
    for (const auto& s : cache.gc_keep_latest()) out << "removed-entry\t" << s << '\n';
  return kExitOk;
}

struct SimulateOptions {
  std::string scenario = "ie-like";
  std::vector<std::string> policies{"engine", "materialize-all", "materialize-none"};
  int iterations = 10;
  std::uint64_t seed = 7;
  std::string frequencies = "0.4,0.4,0.2";
  std::optional<std::int64_t> budget_bytes;
  double bandwidth = kDefaultDiskBandwidthBytesPerSecond;
  std::string data_out;
  std::string trace_out;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  const WorkflowSpec workflow = load_scenario(o.scenario);
  const IterationTrace trace = generate_trace(workflow, parse_frequencies(o.frequencies), o.iterations, o.seed);
  SimulationOptions sim;
  sim.budget_bytes = o.budget_bytes;
  sim.cost_model.disk_bandwidth = o.bandwidth;

  std::vector<SimulationResult> results;
  for (const auto& p : o.policies) results.push_back(simulate(workflow, trace, parse_policy(p), sim));

  out << format_simulation_table(results);
  for (const auto& r : results)
    err << "cumulative\t" << r.policy << '\t' << format_seconds(r.cumulative_seconds()) << '\n';
  if (!o.data_out.empty()) {
    std::ofstream f(o.data_out, std::ios::binary);
    if (!f) throw ConfigError("cannot write data file: " + o.data_out);
    f << simulation_data_csv(results);
  }
  if (!o.trace_out.empty()) {
    std::ofstream f(o.trace_out, std::ios::binary);
    if (!f) throw ConfigError("cannot write trace file: " + o.trace_out);
    f << trace_to_text(trace);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"iterflow: iteration-aware workflow execution with optimal reuse of cached intermediates"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);

  CommonOptions run_opts, plan_opts, diff_opts;
  auto* run = app.add_subcommand("run", "Plan and execute one iteration");
  add_common(run, run_opts, true);
  run->add_flag("--dry-run", run_opts.dry_run, "Print the plan; execute nothing, leave the cache untouched");

  auto* plan = app.add_subcommand("plan", "Print the minimum-cost execution plan without running it");
  add_common(plan, plan_opts, true);

  auto* diff = app.add_subcommand("diff", "Show which operators changed since the last successful run");
  add_common(diff, diff_opts, true);

  std::string cache_root_flag;
  std::string cache_workspace = ".";
  bool keep_latest = false;
  auto* cache = app.add_subcommand("cache", "Inspect or clean the intermediate cache");
  cache->require_subcommand(1);
  add_cache_option(cache, cache_root_flag);
  cache->add_option("--workspace", cache_workspace, "Used to locate the default cache root");
  auto* ls = cache->add_subcommand("ls", "List cached intermediates");
  auto* gc = cache->add_subcommand("gc", "Remove orphaned files and optionally stale entries");
  ls->fallthrough();
  gc->fallthrough();
  gc->add_flag("--keep-latest", keep_latest, "Drop entries not used by the last successful run");

  SimulateOptions sim_opts;
  auto* simulate_cmd = app.add_subcommand("simulate", "Replay a synthetic edit trace under several policies");
  simulate_cmd->add_option("--scenario", sim_opts.scenario, "Bundled scenario (ie-like, classification) or a spec path");
  simulate_cmd->add_option("--policies", sim_opts.policies,
                           "engine, engine-paper-literal, materialize-all, materialize-none")
      ->delimiter(',');
  simulate_cmd->add_option("-n,--iterations", sim_opts.iterations, "Number of edit iterations")
      ->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--seed", sim_opts.seed, "Trace seed");
  simulate_cmd->add_option("--frequencies", sim_opts.frequencies,
                           "Edit probabilities: data-preprocessing,ml,evaluation");
  simulate_cmd->add_option("--budget-bytes", sim_opts.budget_bytes, "Storage budget")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--disk-bandwidth", sim_opts.bandwidth, "Bytes/second used to estimate load times")
      ->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--data-out", sim_opts.data_out, "Also write per-iteration CSV here");
  simulate_cmd->add_option("--trace-out", sim_opts.trace_out, "Also write the generated trace here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_opts, out);
    if (*plan) return cmd_plan(plan_opts, out);
    if (*diff) return cmd_diff(diff_opts, out);
    if (*cache) {
      const fs::path root = resolve_cache(cache_root_flag, cache_workspace);
      if (*ls) return cmd_cache_ls(root, out);
      return cmd_cache_gc(root, keep_latest, out);
    }
    if (*simulate_cmd) return cmd_simulate(sim_opts, out, err);
  } catch (const LockContention& e) {
    err << "error: " << e.what() << '\n';
    return kExitLocked;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace iterflow
