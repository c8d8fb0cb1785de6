#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egmcts/cli.hpp"

using namespace egmcts;
using namespace egmcts::cli;

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations, k, jobs;
  std::optional<double> c, z;
  std::optional<std::string> oracle, weights, out, stock;
  std::optional<bool> stop_on_first;
  bool dump_tree = false;
  bool untrained = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Run config (JSON)");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--iterations", iterations, "Iteration limit");
    app->add_option("--k", k, "Top-k templates per expansion");
    app->add_option("--c", c, "Exploration constant");
    app->add_option("--z", z, "Terminal reward magnitude");
    app->add_option("--jobs", jobs, "Parallel planning workers");
    app->add_option("--oracle", oracle, "synthetic:<path> | remote:<endpoint>");
    app->add_option("--stock", stock, "Stock id file overriding the oracle's stock");
    app->add_option("--weights", weights, "EGN weights file");
    app->add_option("--out", out, "Output directory");
    app->add_option("--stop-on-first", stop_on_first, "Stop at the first solution (true|false)");
    app->add_flag("--dump-tree", dump_tree, "Write the search tree as DOT");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (seed) cfg.seed = *seed;
    if (iterations) cfg.search.iteration_limit = *iterations;
    if (k) cfg.search.k = *k;
    if (c) cfg.search.c = *c;
    if (z) cfg.search.z = *z;
    if (jobs) cfg.jobs = *jobs;
    if (oracle) cfg.oracle = *oracle;
    if (stock) cfg.stock = *stock;
    if (weights) cfg.weights = *weights;
    if (out) cfg.output_dir = *out;
    if (stop_on_first) cfg.search.stop_on_first_solution = *stop_on_first;
    if (dump_tree) cfg.dump_tree = true;
    if (untrained) cfg.untrained = true;
    return cfg;
  }
};

template <class F>
int guarded(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    std::cerr << "egmcts " << name << ": " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience-guided MCTS planner for AND-OR decomposition"};
  app.require_subcommand(1);
  int rc = 0;

  RunFlags plan_flags;
  std::string target;
  auto* plan_cmd = app.add_subcommand("plan", "Plan one target");
  plan_flags.attach(plan_cmd);
  plan_cmd->add_flag("--untrained", plan_flags.untrained, "Constant 0.5 scores (EG-MCTS-0)");
  plan_cmd->add_option("target", target, "Target id")->required();
  plan_cmd->callback([&] {
    rc = guarded("plan", [&] { return cmd_plan(plan_flags.resolve(), target); });
  });

  RunFlags train_flags;
  std::optional<std::string> train_targets, valid_targets;
  std::optional<int> max_rounds;
  auto* train_cmd = app.add_subcommand("train", "Phase I self-play training");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--train-targets", train_targets, "Training target file");
  train_cmd->add_option("--validation-targets", valid_targets, "Validation target file");
  train_cmd->add_option("--max-rounds", max_rounds, "Round cap");
  train_cmd->callback([&] {
    rc = guarded("train", [&] {
      auto cfg = train_flags.resolve();
      if (train_targets) cfg.train_targets = *train_targets;
      if (valid_targets) cfg.validation_targets = *valid_targets;
      if (max_rounds) cfg.phase1.max_rounds = *max_rounds;
      return cmd_train(cfg);
    });
  });

  RunFlags bench_flags;
  std::vector<std::string> algorithms;
  std::optional<std::string> test_targets;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark planners over a target set");
  bench_flags.attach(bench_cmd);
  bench_cmd->add_option("--algorithms", algorithms, "eg-mcts, eg-mcts-0, greedy-dfs, mcts-rollout")
      ->delimiter(',')
      ->required();
  bench_cmd->add_option("--targets", test_targets, "Target file");
  bench_cmd->callback([&] {
    rc = guarded("bench", [&] {
      auto cfg = bench_flags.resolve();
      if (test_targets) cfg.test_targets = *test_targets;
      return cmd_bench(cfg, algorithms);
    });
  });

  NocOptions noc;
  auto* noc_cmd = app.add_subcommand("noc", "Build a reaction network and mine targets");
  noc_cmd->add_option("--records", noc.records, "Reaction records (NDJSON)")->required();
  noc_cmd->add_option("--stock", noc.stock, "Stock id file")->required();
  noc_cmd->add_option("--min-outdegree", noc.min_outdegree);
  noc_cmd->add_option("--min-cost", noc.min_cost);
  noc_cmd->add_option("--seed", noc.seed);
  noc_cmd->add_option("--out", noc.output_dir);
  noc_cmd->add_option("--train-size", noc.split.train);
  noc_cmd->add_option("--validation-size", noc.split.validation);
  noc_cmd->add_option("--test-size", noc.split.test);
  noc_cmd->callback([&] { rc = cmd_noc(noc); });

  std::string generated, reference;
  auto* match_cmd = app.add_subcommand("match", "Matching degree of a route against a reference");
  match_cmd->add_option("generated", generated)->required();
  match_cmd->add_option("reference", reference)->required();
  match_cmd->callback([&] {
    rc = guarded("match", [&] {
      auto m = matching_degree(Route::load(generated), Route::load(reference));
      nlohmann::json j{{"degree", m.degree}, {"matched", m.matched_steps}, {"total", m.total_steps}};
      std::cout << j.dump() << '\n';
      return 0;
    });
  });

  std::uint64_t domain_seed = 0;
  std::string domain_out;
  auto* dom_cmd = app.add_subcommand("gen-domain", "Write a seeded synthetic benchmark domain");
  dom_cmd->add_option("--seed", domain_seed);
  dom_cmd->add_option("--out", domain_out)->required();
  dom_cmd->callback([&] {
    rc = guarded("gen-domain", [&] {
      make_benchmark_domain(domain_seed).save(domain_out);
      return 0;
    });
  });

  std::string inst_domain, inst_out;
  std::size_t inst_n = 50;
  int inst_min = 2, inst_max = 6;
  std::uint64_t inst_salt = 0;
  std::vector<std::string> inst_exclude;
  auto* inst_cmd = app.add_subcommand("gen-instances", "Write certified synthetic targets");
  inst_cmd->add_option("--domain", inst_domain)->required();
  inst_cmd->add_option("--n", inst_n);
  inst_cmd->add_option("--min-length", inst_min);
  inst_cmd->add_option("--max-length", inst_max);
  inst_cmd->add_option("--salt", inst_salt);
  inst_cmd->add_option("--exclude", inst_exclude, "Target files whose ids must not repeat");
  inst_cmd->add_option("--out", inst_out)->required();
  inst_cmd->callback([&] {
    rc = guarded("gen-instances", [&] {
      SyntheticOracle oracle(SyntheticDomain::load(inst_domain));
      GenerationOptions opt;
      opt.salt = inst_salt;
      for (const auto& f : inst_exclude)
        for (auto& id : read_id_lines(f)) opt.exclude.insert(id);
      auto inst = generate_instances(oracle, inst_n, {inst_min, inst_max}, opt);
      write_instances(inst_out, inst);
      return 0;
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }
  return rc;
}
