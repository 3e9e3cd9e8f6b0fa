#include <gtest/gtest.h>

#include "iterflow/error.hpp"
#include "iterflow/executor.hpp"
#include "iterflow/report.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace iterflow {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::simulated_node;
using testing::TempDir;
using testing::tree_snapshot;
using testing::write_file;

RunConfig config_for(const TempDir& dir, PolicyConfig policy = EnginePolicy{}) {
  RunConfig c;
  c.workspace = dir.path();
  c.cache_root = dir.path() / "cache";
  c.policy = policy;
  return c;
}

WorkflowSpec chain_ab() {
  WorkflowSpec s;
  s.nodes = {simulated_node("a", 3, 1000), simulated_node("b", 2, 10, {"a"})};
  s.outputs = {"b"};
  return s;
}

// a -> b -> c -> d with a side branch a -> e; outputs d and e.
WorkflowSpec mid_dag() {
  WorkflowSpec s;
  s.nodes = {simulated_node("a", 10, 100'000'000), simulated_node("b", 8, 200'000'000, {"a"}),
             simulated_node("c", 6, 50'000'000, {"b"}), simulated_node("d", 4, 1'000'000, {"c"}),
             simulated_node("e", 5, 1'000'000, {"a"})};
  s.outputs = {"d", "e"};
  return s;
}

CommandAction shell(const std::string& script, std::vector<std::string> inputs, std::string output) {
  return CommandAction{{"sh", "-c", script}, std::move(inputs), std::move(output), 0.5};
}

OperatorNode command_node(std::string name, CommandAction action, std::vector<std::string> parents = {}) {
  OperatorNode n;
  n.name = std::move(name);
  n.action = std::move(action);
  n.parents = std::move(parents);
  return n;
}

TEST(Execute, AllPrunePlanDoesNothing) {
  TempDir dir;
  const auto spec = chain_ab();
  auto cache = CacheStore::open(dir.path() / "cache", CacheStore::Mode::Writer);
  ExecutionPlan plan;
  plan.states = {{"a", NodeState::Prune}, {"b", NodeState::Prune}};
  const auto sigs = compute_signatures(spec, dir.path());
  const CostMap costs = assemble_costs(spec, sigs, cache.manifest(), {});
  const auto report = execute(spec, plan, sigs, costs, cache, EnginePolicy{}, {});
  EXPECT_TRUE(report.success);
  EXPECT_EQ(report.totals.iteration_seconds, 0.0);
  for (const auto& n : report.nodes) EXPECT_EQ(n.outcome, Outcome::Pruned);
  EXPECT_TRUE(cache.manifest().entries.empty());
}

TEST(RunIteration, ColdChainChargesDeclaredCosts) {
  TempDir dir;
  const auto report = run_iteration(chain_ab(), config_for(dir, MaterializeNone{}));
  EXPECT_EQ(report.clock_mode, ClockMode::Simulated);
  EXPECT_EQ(report.totals.compute_seconds, 5.0);
  EXPECT_EQ(report.totals.iteration_seconds, 5.0);
  EXPECT_EQ(report.changes.changed, (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(report.changes.added, (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(report.plan.state_of("a"), NodeState::Compute);
  EXPECT_EQ(report.plan.state_of("b"), NodeState::Compute);
  EXPECT_EQ(report.iteration_index, 1);
}

TEST(RunIteration, WarmRerunOnlyLoads) {
  TempDir dir;
  const auto config = config_for(dir);
  const auto cold = run_iteration(mid_dag(), config);
  for (const auto& sink : {"d", "e"}) EXPECT_TRUE(cold.find(sink)->materialized) << sink;
  const auto warm = run_iteration(mid_dag(), config);
  EXPECT_EQ(warm.totals.compute_seconds, 0.0);
  EXPECT_TRUE(warm.changes.changed.empty());
  EXPECT_EQ(warm.plan.count(NodeState::Compute), 0u);
  EXPECT_EQ(warm.plan.state_of("d"), NodeState::Load);
  EXPECT_EQ(warm.plan.state_of("e"), NodeState::Load);
  EXPECT_EQ(warm.plan.state_of("a"), NodeState::Prune);
  EXPECT_DOUBLE_EQ(warm.totals.load_seconds, 0.02);
  EXPECT_EQ(warm.iteration_index, 2);
  EXPECT_DOUBLE_EQ(warm.totals.cumulative_seconds, cold.totals.iteration_seconds + warm.totals.iteration_seconds);
  EXPECT_EQ(read_run_log(config.cache_root).size(), 2u);
}

TEST(RunIteration, MidDagEditRecomputesClosureAndMatchesOracle) {
  TempDir dir;
  const auto config = config_for(dir, MaterializeAll{});
  run_iteration(mid_dag(), config);
  auto edited = mid_dag();
  edited.find("b")->env_fingerprint = "v2";

  CacheManifest manifest = load_manifest(config.cache_root);
  const IterationPlan ip = plan_iteration(edited, config, manifest);
  EXPECT_EQ(ip.changes.changed, (std::set<std::string>{"b", "c", "d"}));
  const Dag dag = Dag::from_spec(ip.spec);
  const NameSet mandatory(ip.changes.changed.begin(), ip.changes.changed.end());
  const auto oracle = assign_states_bruteforce(dag, ip.costs, mandatory, {"d", "e"});
  EXPECT_EQ(ip.plan, oracle);
  EXPECT_EQ(oracle.state_of("a"), NodeState::Load);
  EXPECT_EQ(oracle.state_of("e"), NodeState::Load);

  const auto report = run_iteration(edited, config);
  EXPECT_EQ(report.plan, oracle);
  EXPECT_DOUBLE_EQ(report.totals.compute_seconds, 18.0);
}

TEST(RunIteration, DeadOperatorsAreNotRun) {
  TempDir dir;
  auto spec = chain_ab();
  spec.nodes.push_back(simulated_node("unused", 100, 1, {"a"}));
  const auto report = run_iteration(spec, config_for(dir));
  EXPECT_EQ(report.removed_dead, std::set<std::string>{"unused"});
  EXPECT_EQ(report.find("unused"), nullptr);
  EXPECT_EQ(report.totals.compute_seconds, 5.0);
}

TEST(RunIteration, DryRunLeavesCacheUntouched) {
  TempDir dir;
  const auto config = config_for(dir);
  RunConfig dry = config;
  dry.dry_run = true;

  const auto cold_dry = run_iteration(mid_dag(), dry);
  EXPECT_FALSE(fs::exists(config.cache_root));
  EXPECT_TRUE(cold_dry.dry_run);
  EXPECT_EQ(cold_dry.plan.count(NodeState::Compute), 5u);

  run_iteration(mid_dag(), config);
  const auto before = tree_snapshot(config.cache_root);
  auto edited = mid_dag();
  edited.find("c")->env_fingerprint = "v2";
  const auto report = run_iteration(edited, dry);
  EXPECT_EQ(report.totals.compute_seconds, 0.0);
  EXPECT_EQ(report.changes.changed, (std::set<std::string>{"c", "d"}));
  EXPECT_EQ(tree_snapshot(config.cache_root), before);
}

TEST(RunIteration, MaterializeNoneNeverWrites) {
  TempDir dir;
  const auto config = config_for(dir, MaterializeNone{});
  run_iteration(mid_dag(), config);
  const auto second = run_iteration(mid_dag(), config);
  EXPECT_TRUE(load_manifest(config.cache_root).entries.empty());
  EXPECT_DOUBLE_EQ(second.totals.compute_seconds, 33.0);
  EXPECT_EQ(second.totals.materialize_seconds, 0.0);
}

TEST(RunIteration, MaterializeAllChargesWrites) {
  TempDir dir;
  const auto report = run_iteration(mid_dag(), config_for(dir, MaterializeAll{}));
  EXPECT_EQ(load_manifest(dir.path() / "cache").entries.size(), 5u);
  EXPECT_DOUBLE_EQ(report.totals.materialize_seconds, 3.52);
}

TEST(RunIteration, BudgetLimitsMaterialization) {
  TempDir dir;
  auto config = config_for(dir, MaterializeAll{});
  config.budget_bytes = 150'000'000;
  run_iteration(mid_dag(), config);
  EXPECT_LE(load_manifest(config.cache_root).total_bytes(), 150'000'000);
}

TEST(Execute, DecisionsHappenBeforeLaterOperatorsStart) {
  TempDir dir;
  const auto spec = mid_dag();
  auto cache = CacheStore::open(dir.path() / "cache", CacheStore::Mode::Writer);
  const auto sigs = compute_signatures(spec, dir.path());
  const CostMap costs = assemble_costs(spec, sigs, cache.manifest(), {});
  const Dag dag = Dag::from_spec(spec);
  const auto plan = assign_states_optimal(dag, costs, {"a", "b", "c", "d", "e"}, {"d", "e"});

  std::vector<std::pair<ExecEvent, std::string>> events;
  std::vector<std::string> violations;
  ExecuteOptions options;
  options.observer = [&](ExecEvent e, const std::string& n) { events.emplace_back(e, n); };
  options.decision_lookup_wrapper = [&](CostLookup inner) -> CostLookup {
    // Only the node being decided and its ancestors may be consulted; the
    // most recent ComputeEnd names the node being decided.
    return [&, inner](std::string_view who) {
      const std::string& self = events.back().second;
      const auto anc = dag.ancestors(dag.require_index(self));
      const auto idx = dag.require_index(who);
      if (who != self && !std::binary_search(anc.begin(), anc.end(), idx))
        violations.push_back(self + " looked at " + std::string(who));
      return inner(who);
    };
  };
  const auto report = execute(spec, plan, sigs, costs, cache, EnginePolicy{}, options);
  ASSERT_TRUE(report.success);
  EXPECT_TRUE(violations.empty()) << violations.front();

  std::set<std::string> decided;
  std::vector<std::string> order;
  for (const auto& [e, n] : events) {
    if (e == ExecEvent::Decided) decided.insert(n);
    if (e == ExecEvent::ComputeStart) {
      for (const auto& earlier : order) EXPECT_TRUE(decided.contains(earlier)) << earlier << " before " << n;
      order.push_back(n);
    }
  }
  EXPECT_EQ(order.size(), 5u);
  EXPECT_EQ(decided.size(), 5u);
}

TEST(Execute, CorruptPayloadFallsBackToCompute) {
  TempDir dir;
  const auto spec = chain_ab();
  auto cache = CacheStore::open(dir.path() / "cache", CacheStore::Mode::Writer);
  const auto sigs = compute_signatures(spec, dir.path());
  cache.put(sigs.at("b"), "b", SyntheticPayload{10}, 2.0);
  fs::resize_file(dir.path() / "cache" / payload_relative_path(sigs.at("b")), 3);
  const CostMap costs = assemble_costs(spec, sigs, cache.manifest(), {});

  ExecutionPlan load_b;
  load_b.states = {{"a", NodeState::Prune}, {"b", NodeState::Load}};
  auto report = execute(spec, load_b, sigs, costs, cache, MaterializeNone{}, {});
  EXPECT_FALSE(report.success);
  EXPECT_EQ(report.find("b")->outcome, Outcome::Failed);

  ExecutionPlan with_parent;
  with_parent.states = {{"a", NodeState::Compute}, {"b", NodeState::Load}};
  report = execute(spec, with_parent, sigs, costs, cache, MaterializeNone{}, {});
  EXPECT_TRUE(report.success);
  EXPECT_EQ(report.find("b")->outcome, Outcome::LoadFallback);
  EXPECT_EQ(report.totals.compute_seconds, 5.0);
}

TEST(Execute, ClockModeDefaultsFollowActions) {
  EXPECT_EQ(resolve_clock_mode(chain_ab(), std::nullopt), ClockMode::Simulated);
  auto spec = chain_ab();
  spec.nodes.push_back(command_node("cmd", shell("true", {}, "x")));
  EXPECT_EQ(resolve_clock_mode(spec, std::nullopt), ClockMode::Real);
  EXPECT_EQ(resolve_clock_mode(spec, ClockMode::Simulated), ClockMode::Simulated);
}

// gen -> upper -> report, gen -> count; one source file feeds gen.
WorkflowSpec command_workflow() {
  WorkflowSpec s;
  auto gen = command_node("gen", shell("cat input.txt input.txt > {output}", {}, "gen.txt"));
  gen.sources = {"input.txt"};
  s.nodes = {gen,
             command_node("upper", shell("tr a-z A-Z < gen.txt > {output}", {"gen.txt"}, "upper.txt"), {"gen"}),
             command_node("count", shell("wc -c < gen.txt > {output}", {"gen.txt"}, "count.txt"), {"gen"}),
             command_node("report", shell("cat upper.txt count.txt > {output}", {"upper.txt", "count.txt"},
                                          "report.txt"),
                          {"count", "upper"})};
  s.outputs = {"report"};
  return s;
}

TEST(RunIteration, CommandWorkflowWarmOutputsMatchCold) {
  TempDir dir;
  write_file(dir / "input.txt", "hello helix\n");
  auto config = config_for(dir);
  config.clock_mode = ClockMode::Simulated;

  const auto cold = run_iteration(command_workflow(), config);
  ASSERT_TRUE(cold.success) << (cold.failures.empty() ? "" : cold.failures.front());
  const std::string expected = read_file(dir / "report.txt");
  EXPECT_EQ(expected, "HELLO HELIX\nHELLO HELIX\n24\n");
  for (const char* f : {"gen.txt", "upper.txt", "count.txt", "report.txt"}) fs::remove(dir / f);

  const auto warm = run_iteration(command_workflow(), config);
  ASSERT_TRUE(warm.success);
  EXPECT_EQ(warm.totals.compute_seconds, 0.0);
  EXPECT_EQ(warm.plan.state_of("report"), NodeState::Load);
  EXPECT_EQ(read_file(dir / "report.txt"), expected);
}

TEST(RunIteration, EditedCommandRecomputesFromCachedInputs) {
  TempDir dir;
  write_file(dir / "input.txt", "abc\n");
  auto config = config_for(dir, MaterializeAll{});
  config.clock_mode = ClockMode::Simulated;
  ASSERT_TRUE(run_iteration(command_workflow(), config).success);

  auto edited = command_workflow();
  std::get<CommandAction>(edited.find("count")->action).argv[2] = "wc -l < gen.txt > {output}";
  const auto report = run_iteration(edited, config);
  ASSERT_TRUE(report.success);
  EXPECT_EQ(report.changes.changed, (std::set<std::string>{"count", "report"}));
  EXPECT_EQ(report.plan.state_of("gen"), NodeState::Load);
  EXPECT_EQ(report.plan.state_of("upper"), NodeState::Load);
  EXPECT_EQ(read_file(dir / "report.txt"), "ABC\nABC\n2\n");
}

TEST(RunIteration, FailingOperatorSkipsItsDescendantsOnly) {
  TempDir dir;
  write_file(dir / "input.txt", "x\n");
  auto spec = command_workflow();
  std::get<CommandAction>(spec.find("upper")->action).argv[2] = "exit 4";
  spec.outputs.push_back("count");
  auto config = config_for(dir);
  const auto report = run_iteration(spec, config);
  EXPECT_FALSE(report.success);
  EXPECT_EQ(report.find("upper")->outcome, Outcome::Failed);
  EXPECT_EQ(report.find("upper")->message, "exit code 4");
  EXPECT_EQ(report.find("report")->outcome, Outcome::Skipped);
  EXPECT_EQ(report.find("count")->outcome, Outcome::Ok);
  EXPECT_EQ(report.find("gen")->outcome, Outcome::Ok);
  EXPECT_EQ(report.clock_mode, ClockMode::Real);

  // The failed iteration is not recorded as the baseline for change detection.
  EXPECT_TRUE(load_manifest(config.cache_root).previous_signatures.empty());
}

TEST(RunIteration, MissingDeclaredOutputIsAFailure) {
  TempDir dir;
  WorkflowSpec s;
  s.nodes = {command_node("lazy", shell("true", {}, "never.txt"))};
  s.outputs = {"lazy"};
  const auto report = run_iteration(s, config_for(dir));
  EXPECT_FALSE(report.success);
  EXPECT_EQ(report.find("lazy")->message, "declared output was not produced");
}

TEST(RunIteration, RunLogIsOneJsonDocumentPerLine) {
  TempDir dir;
  const auto config = config_for(dir);
  run_iteration(chain_ab(), config);
  run_iteration(chain_ab(), config);
  const auto lines = read_run_log(config.cache_root);
  ASSERT_EQ(lines.size(), 2u);
  const auto second = nlohmann::json::parse(lines[1]);
  EXPECT_EQ(second.at("iteration_index"), 2);
  EXPECT_EQ(second.at("policy"), "engine");
}

}  // namespace
}  // namespace iterflow
