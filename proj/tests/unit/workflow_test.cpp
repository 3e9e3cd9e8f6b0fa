#include <gtest/gtest.h>

#include <random>

#include "iterflow/error.hpp"
#include "iterflow/workflow.hpp"
#include "test_support.hpp"

namespace iterflow {
namespace {

using testing::simulated_node;

WorkflowSpec make_spec(std::vector<OperatorNode> nodes, std::vector<std::string> outputs) {
  WorkflowSpec s;
  s.nodes = std::move(nodes);
  s.outputs = std::move(outputs);
  return s;
}

TEST(ParseWorkflow, MinimalSingleSource) {
  const auto spec = parse_workflow(R"({
    "version": 1,
    "nodes": [{"name": "raw", "kind": "data-preprocessing",
               "action": {"type": "command", "argv": ["cp", "in.txt", "{output}"], "output": "raw.txt"},
               "sources": ["in.txt"]}],
    "outputs": ["raw"]
  })");
  ASSERT_EQ(spec.nodes.size(), 1u);
  EXPECT_EQ(spec.nodes[0].name, "raw");
  EXPECT_TRUE(spec.nodes[0].parents.empty());
  EXPECT_EQ(spec.nodes[0].sources, std::vector<std::string>{"in.txt"});
  const auto& cmd = std::get<CommandAction>(spec.nodes[0].action);
  EXPECT_EQ(cmd.output, "raw.txt");
  EXPECT_FALSE(cmd.estimate_seconds.has_value());
  EXPECT_EQ(Dag::from_spec(spec).size(), 1u);
}

TEST(ParseWorkflow, TwoCycleNamesBothNodes) {
  try {
    parse_workflow(R"({"version": 1, "outputs": ["a"], "nodes": [
      {"name": "a", "parents": ["b"], "action": {"type": "simulated", "compute_seconds": 1, "output_bytes": 1}},
      {"name": "b", "parents": ["a"], "action": {"type": "simulated", "compute_seconds": 1, "output_bytes": 1}}]})");
    FAIL() << "expected CycleDetected";
  } catch (const CycleDetected& e) {
    auto cycle = e.cycle();
    std::sort(cycle.begin(), cycle.end());
    EXPECT_EQ(cycle, (std::vector<std::string>{"a", "b"}));
    EXPECT_NE(std::string(e.what()).find("a -> b"), std::string::npos);
  }
}

TEST(ParseWorkflow, DanglingParent) {
  try {
    parse_workflow(R"({"version": 1, "outputs": ["train"], "nodes": [
      {"name": "train", "parents": ["features"],
       "action": {"type": "simulated", "compute_seconds": 1, "output_bytes": 1}}]})");
    FAIL() << "expected UnknownParent";
  } catch (const UnknownParent& e) {
    EXPECT_EQ(e.parent(), "features");
  }
}

TEST(ParseWorkflow, RejectsMalformedDocuments) {
  EXPECT_THROW(parse_workflow("{"), SyntaxError);
  EXPECT_THROW(parse_workflow(R"({"version": 2, "nodes": [], "outputs": []})"), SyntaxError);
  EXPECT_THROW(parse_workflow(R"({"version": 1, "nodes": [], "outputs": [], "extra": 1})"), SyntaxError);
  EXPECT_THROW(parse_workflow(R"({"version": 1, "outputs": ["a"], "nodes": [
      {"name": "a", "action": {"type": "simulated", "compute_seconds": -1, "output_bytes": 1}}]})"),
               SyntaxError);
  EXPECT_THROW(parse_workflow(R"({"version": 1, "outputs": ["a"], "nodes": [
      {"name": "a", "action": {"type": "shell", "cmd": "true"}}]})"),
               SyntaxError);
  EXPECT_THROW(parse_workflow(R"({"version": 1, "outputs": ["a"], "nodes": [
      {"name": "a", "action": {"type": "command", "argv": [], "output": "x"}}]})"),
               SyntaxError);
}

TEST(ParseWorkflow, DuplicateNamesAndMissingOutputs) {
  EXPECT_THROW(validate_workflow(make_spec({simulated_node("a", 1, 1), simulated_node("a", 2, 2)}, {"a"})),
               DuplicateName);
  EXPECT_THROW(validate_workflow(make_spec({simulated_node("a", 1, 1)}, {})), NoOutputs);
  EXPECT_THROW(validate_workflow(make_spec({simulated_node("a", 1, 1)}, {"zzz"})), NoOutputs);
}

TEST(ParseWorkflow, SerializeRoundTrip) {
  auto spec = make_spec({simulated_node("a", 1.5, 10, {}, "ml"), simulated_node("b", 2, 20, {"a"}, "evaluation")},
                        {"b"});
  spec.nodes[1].env_fingerprint = "gcc-13";
  OperatorNode c;
  c.name = "c";
  c.action = CommandAction{{"sh", "-c", "echo hi > {output}"}, {"a.out"}, "c.out", 2.5};
  c.parents = {"a"};
  c.sources = {"src/c.py"};
  spec.nodes.push_back(c);
  spec.outputs.push_back("c");
  EXPECT_EQ(parse_workflow(serialize_workflow(spec)), spec);
  EXPECT_EQ(serialize_workflow(parse_workflow(serialize_workflow(spec))), serialize_workflow(spec));
}

TEST(TopologicalOrder, Chain) {
  auto spec = make_spec({simulated_node("c", 1, 1, {"b"}), simulated_node("a", 1, 1), simulated_node("b", 1, 1, {"a"})},
                        {"c"});
  EXPECT_EQ(topological_order(spec), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(TopologicalOrder, DiamondBreaksTiesByName) {
  auto spec = make_spec({simulated_node("d", 1, 1, {"c", "b"}), simulated_node("c", 1, 1, {"a"}),
                         simulated_node("b", 1, 1, {"a"}), simulated_node("a", 1, 1)},
                        {"d"});
  EXPECT_EQ(topological_order(spec), (std::vector<std::string>{"a", "b", "c", "d"}));
}

TEST(TopologicalOrder, SingleNode) {
  EXPECT_EQ(topological_order(make_spec({simulated_node("only", 1, 1)}, {"only"})),
            std::vector<std::string>{"only"});
}

TEST(PruneDead, IsolatedNodeRemoved) {
  auto spec = make_spec({simulated_node("a", 1, 1), simulated_node("b", 1, 1, {"a"}), simulated_node("x", 1, 1)}, {"b"});
  const auto r = prune_dead_operators(spec);
  EXPECT_EQ(r.removed, std::set<std::string>{"x"});
  EXPECT_EQ(r.spec.nodes.size(), 2u);
}

TEST(PruneDead, IdentityWhenEverythingIsAnOutput) {
  auto spec = make_spec({simulated_node("a", 1, 1), simulated_node("b", 1, 1, {"a"})}, {"a", "b"});
  const auto r = prune_dead_operators(spec);
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.spec, spec);
}

TEST(PruneDead, DeadBranch) {
  auto spec = make_spec({simulated_node("a", 1, 1), simulated_node("b", 1, 1, {"a"}), simulated_node("c", 1, 1, {"b"}),
                         simulated_node("d", 1, 1, {"a"})},
                        {"c"});
  EXPECT_EQ(prune_dead_operators(spec).removed, std::set<std::string>{"d"});
}

TEST(PruneDead, RandomDagsKeepExactlyAncestorsOfOutputsAndAreIdempotent) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 200; ++round) {
    const auto inst = testing::random_instance(rng, 12);
    const auto spec = testing::spec_from_instance(inst);
    const auto once = prune_dead_operators(spec);

    std::set<std::string> live;
    for (const auto& s : inst.sinks) {
      live.insert(s);
      for (auto a : inst.dag.ancestors(inst.dag.require_index(s))) live.insert(inst.dag.name(a));
    }
    std::set<std::string> kept;
    for (const auto& n : once.spec.nodes) kept.insert(n.name);
    EXPECT_EQ(kept, live);
    EXPECT_EQ(kept.size() + once.removed.size(), spec.nodes.size());

    const auto twice = prune_dead_operators(once.spec);
    EXPECT_TRUE(twice.removed.empty());
    EXPECT_EQ(twice.spec, once.spec);
  }
}

TEST(Dag, AncestorsDescendantsAndOrder) {
  const Dag dag({"a", "b", "c", "d"}, {{"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}});
  EXPECT_EQ(dag.ancestors(3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(dag.descendants(0), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_TRUE(dag.ancestors(0).empty());
  EXPECT_EQ(dag.topological_order(), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_FALSE(dag.index_of("zz").has_value());
}

}  // namespace
}  // namespace iterflow
