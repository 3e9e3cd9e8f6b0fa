#include "iterflow/simulator.hpp"

#include <stdlib.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "iterflow/error.hpp"
#include "iterflow/report.hpp"
#include "scenarios_data.hpp"

namespace iterflow {

namespace fs = std::filesystem;

void KindFrequencies::validate() const {
  for (double p : {preprocessing, ml, evaluation})
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("kind frequencies must be nonnegative");
  if (std::abs(preprocessing + ml + evaluation - 1.0) > 1e-9) throw ConfigError("kind frequencies must sum to 1");
}

KindFrequencies parse_frequencies(std::string_view text) {
  std::vector<double> parts;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse frequency '" + item + "'");
    }
  }
  if (parts.size() != 3) throw ConfigError("expected three comma-separated frequencies");
  KindFrequencies f{parts[0], parts[1], parts[2]};
  f.validate();
  return f;
}

IterationTrace generate_trace(const WorkflowSpec& workflow, const KindFrequencies& frequencies, int n_iterations,
                              std::uint64_t seed) {
  frequencies.validate();
  if (n_iterations < 1) throw ConfigError("a trace needs at least one iteration");

  std::map<std::string, std::vector<std::string>, std::less<>> by_kind;
  for (const auto& n : workflow.nodes) by_kind[n.kind].push_back(n.name);
  for (auto& [_, names] : by_kind) std::sort(names.begin(), names.end());

  IterationTrace trace;
  trace.seed = seed;
  trace.frequencies = frequencies;
  std::mt19937_64 rng(seed);
  for (int step = 0; step < n_iterations; ++step) {
    // 53-bit uniform in [0, 1); std distributions are not portable.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    std::string_view kind = kEvaluationKind;
    if (u < frequencies.preprocessing)
      kind = kPreprocessingKind;
    else if (u < frequencies.preprocessing + frequencies.ml)
      kind = kMlKind;
    auto it = by_kind.find(kind);
    if (it == by_kind.end() || it->second.empty()) throw KindAbsent(std::string(kind));
    const auto& candidates = it->second;
    const std::string& target = candidates[rng() % candidates.size()];
    trace.steps.push_back(Modification{std::string(kind), target});
  }
  return trace;
}

std::string trace_to_text(const IterationTrace& trace) {
  std::ostringstream out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i)
    out << (i + 1) << '\t' << trace.steps[i].target_kind << '\t' << trace.steps[i].target_node << '\n';
  return out.str();
}

void apply_modification(WorkflowSpec& workflow, const Modification& mod, std::size_t step_index) {
  OperatorNode* node = workflow.find(mod.target_node);
  if (!node) throw SpecError("trace edits unknown operator '" + mod.target_node + "'");
  node->env_fingerprint = "edit-" + std::to_string(step_index);
}

double SimulationResult::cumulative_seconds() const {
  return iterations.empty() ? 0.0 : iterations.back().cumulative_seconds;
}

std::optional<double> SimulationResult::mean_iteration_seconds(std::string_view kind) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& it : iterations) {
    if (it.iteration == 0 || it.kind != kind) continue;
    sum += it.iteration_seconds;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

namespace {

// Scratch directory removed on scope exit.
class ScratchDir {
 public:
  ScratchDir() {
    std::string pattern = (fs::temp_directory_path() / "iterflow-sim-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw IoError("cannot create scratch directory");
    path_ = pattern;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

}  // namespace

SimulationResult simulate(const WorkflowSpec& workflow, const IterationTrace& trace, const PolicyConfig& policy,
                          const SimulationOptions& options) {
  for (const auto& n : workflow.nodes)
    if (!std::holds_alternative<SimulatedAction>(n.action))
      throw ConfigError("simulation requires simulated actions; '" + n.name + "' runs a command");

  ScratchDir scratch;
  RunConfig config;
  config.cache_root = scratch.path() / "cache";
  config.workspace = options.workspace.value_or(scratch.path());
  config.budget_bytes = options.budget_bytes;
  config.policy = policy;
  config.clock_mode = ClockMode::Simulated;
  config.cost_model = options.cost_model;

  SimulationResult result;
  result.policy = policy_label(policy);
  WorkflowSpec current = workflow;
  for (std::size_t step = 0; step <= trace.steps.size(); ++step) {
    IterationResult it;
    it.iteration = static_cast<int>(step);
    if (step == 0) {
      it.kind = std::string(kInitialRunKind);
    } else {
      const Modification& mod = trace.steps[step - 1];
      apply_modification(current, mod, step);
      it.kind = mod.target_kind;
      it.target = mod.target_node;
    }
    it.report = run_iteration(current, config);
    if (!it.report.success) throw Error("simulated iteration failed: " + it.report.failures.front());
    it.iteration_seconds = it.report.totals.iteration_seconds;
    it.cumulative_seconds = it.report.totals.cumulative_seconds;
    result.iterations.push_back(std::move(it));
  }
  return result;
}

std::string format_simulation_table(const std::vector<SimulationResult>& results) {
  std::ostringstream out;
  out << "iteration\tkind\tpolicy\titeration_seconds\tcumulative_seconds\n";
  for (const auto& r : results)
    for (const auto& it : r.iterations)
      out << it.iteration << '\t' << it.kind << '\t' << r.policy << '\t' << format_seconds(it.iteration_seconds)
          << '\t' << format_seconds(it.cumulative_seconds) << '\n';
  return out.str();
}

std::string simulation_data_csv(const std::vector<SimulationResult>& results) {
  std::ostringstream out;
  out << "policy,iteration,kind,target,compute_seconds,load_seconds,materialize_seconds,iteration_seconds,"
         "cumulative_seconds\n";
  for (const auto& r : results)
    for (const auto& it : r.iterations) {
      const auto& t = it.report.totals;
      out << r.policy << ',' << it.iteration << ',' << it.kind << ',' << it.target << ','
          << format_seconds(t.compute_seconds) << ',' << format_seconds(t.load_seconds) << ','
          << format_seconds(t.materialize_seconds) << ',' << format_seconds(it.iteration_seconds) << ','
          << format_seconds(it.cumulative_seconds) << '\n';
    }
  return out.str();
}

std::vector<std::string> bundled_scenario_names() {
  std::vector<std::string> out;
  for (const auto& s : scenarios::kBundled) out.emplace_back(s.name);
  return out;
}

std::optional<std::string_view> bundled_scenario_text(std::string_view name) {
  for (const auto& s : scenarios::kBundled)
    if (s.name == name) return s.text;
  return std::nullopt;
}

WorkflowSpec load_scenario(std::string_view name_or_path) {
  if (auto text = bundled_scenario_text(name_or_path)) return parse_workflow(*text);
  if (fs::exists(name_or_path)) return load_workflow_file(std::string(name_or_path));
  std::string known;
  for (const auto& n : bundled_scenario_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown scenario '" + std::string(name_or_path) + "' (bundled: " + known + ")");
}

}  // namespace iterflow
