#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egmcts/baselines.hpp"
#include "egmcts/eg_mcts.hpp"
#include "egmcts/egn.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/instances.hpp"
#include "egmcts/metrics.hpp"
#include "egmcts/noc.hpp"
#include "egmcts/parallel.hpp"
#include "egmcts/phase1.hpp"
#include "egmcts/remote_oracle.hpp"
#include "egmcts/routes.hpp"
#include "egmcts/synthetic_domain.hpp"

namespace egmcts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitSolved = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUnsolved = 2;
inline constexpr int kConfigVersion = 1;

/// Everything a run depends on. Serialized as a versioned JSON document;
/// command-line flags override individual fields.
struct RunConfig {
  std::string oracle;  // "synthetic:<path>" or "remote:<endpoint>"
  std::string stock;   // optional id file; default: the oracle's own stock
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string weights;
  bool untrained = false;
  bool dump_tree = false;
  int jobs = 1;
  SearchParams search;
  Phase1Params phase1;
  TrainConfig train;
  DfsParams dfs;
  RolloutParams rollout;
  std::string train_targets;
  std::string validation_targets;
  std::string test_targets;

  json to_json() const {
    json j;
    j["version"] = kConfigVersion;
    j["oracle"] = oracle;
    j["stock"] = stock;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["weights"] = weights;
    j["untrained"] = untrained;
    j["dump_tree"] = dump_tree;
    j["jobs"] = jobs;
    j["search"] = {{"c", search.c},
                   {"z", search.z},
                   {"iteration_limit", search.iteration_limit},
                   {"k", search.k},
                   {"stop_on_first_solution", search.stop_on_first_solution}};
    j["phase1"] = {{"epsilon1", phase1.epsilon1},
                   {"epsilon2", phase1.epsilon2},
                   {"window", phase1.window},
                   {"max_rounds", phase1.max_rounds},
                   {"accumulate", phase1.accumulate}};
    j["train"] = {{"epochs", train.epochs},
                  {"dropout_rate", train.dropout_rate},
                  {"batch_size", train.batch_size},
                  {"seed", train.seed},
                  {"learning_rate", train.adam.learning_rate},
                  {"beta1", train.adam.beta1},
                  {"beta2", train.adam.beta2},
                  {"epsilon", train.adam.epsilon}};
    j["baselines"] = {{"dfs_max_depth", dfs.max_depth},
                      {"rollout_depth", rollout.max_rollout_depth}};
    j["targets"] = {{"train", train_targets},
                    {"validation", validation_targets},
                    {"test", test_targets}};
    return j;
  }

  /// Relative paths are taken relative to `base`.
  static RunConfig from_json(const json& j, const fs::path& base = {}) {
    RunConfig c;
    try {
      if (j.value("version", 0) != kConfigVersion) {
        throw ConfigError("unsupported config version (expected " +
                          std::to_string(kConfigVersion) + ")");
      }
      auto path = [&](const std::string& p) -> std::string {
        if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
        return (base / p).lexically_normal().string();
      };
      c.oracle = j.value("oracle", std::string());
      if (c.oracle.rfind("synthetic:", 0) == 0) c.oracle = "synthetic:" + path(c.oracle.substr(10));
      c.stock = path(j.value("stock", std::string()));
      c.seed = j.value("seed", std::uint64_t{0});
      c.output_dir = path(j.value("output_dir", std::string("out")));
      c.weights = path(j.value("weights", std::string()));
      c.untrained = j.value("untrained", false);
      c.dump_tree = j.value("dump_tree", false);
      c.jobs = j.value("jobs", 1);
      if (auto s = j.find("search"); s != j.end()) {
        c.search.c = s->value("c", c.search.c);
        c.search.z = s->value("z", c.search.z);
        c.search.iteration_limit = s->value("iteration_limit", c.search.iteration_limit);
        c.search.k = s->value("k", c.search.k);
        c.search.stop_on_first_solution =
            s->value("stop_on_first_solution", c.search.stop_on_first_solution);
      }
      if (auto s = j.find("phase1"); s != j.end()) {
        c.phase1.epsilon1 = s->value("epsilon1", c.phase1.epsilon1);
        c.phase1.epsilon2 = s->value("epsilon2", c.phase1.epsilon2);
        c.phase1.window = s->value("window", c.phase1.window);
        c.phase1.max_rounds = s->value("max_rounds", c.phase1.max_rounds);
        c.phase1.accumulate = s->value("accumulate", c.phase1.accumulate);
      }
      if (auto s = j.find("train"); s != j.end()) {
        c.train.epochs = s->value("epochs", c.train.epochs);
        c.train.dropout_rate = s->value("dropout_rate", c.train.dropout_rate);
        c.train.batch_size = s->value("batch_size", c.train.batch_size);
        c.train.seed = s->value("seed", c.train.seed);
        c.train.adam.learning_rate = s->value("learning_rate", c.train.adam.learning_rate);
        c.train.adam.beta1 = s->value("beta1", c.train.adam.beta1);
        c.train.adam.beta2 = s->value("beta2", c.train.adam.beta2);
        c.train.adam.epsilon = s->value("epsilon", c.train.adam.epsilon);
      }
      if (auto s = j.find("baselines"); s != j.end()) {
        c.dfs.max_depth = s->value("dfs_max_depth", c.dfs.max_depth);
        c.rollout.max_rollout_depth = s->value("rollout_depth", c.rollout.max_rollout_depth);
      }
      if (auto s = j.find("targets"); s != j.end()) {
        c.train_targets = path(s->value("train", std::string()));
        c.validation_targets = path(s->value("validation", std::string()));
        c.test_targets = path(s->value("test", std::string()));
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config: ") + e.what());
    }
    return c;
  }

  static RunConfig load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(file + ": " + e.what());
    }
    return from_json(j, fs::path(file).parent_path());
  }

  /// Copies shared settings into the nested parameter blocks and checks
  /// ranges and referenced files.
  void finalize() {
    phase1.search = search;
    phase1.jobs = jobs;
    dfs.iteration_limit = search.iteration_limit;
    dfs.k = search.k;
    rollout.iteration_limit = search.iteration_limit;
    rollout.k = search.k;
    rollout.c = search.c;
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    search.validate();
    phase1.validate();
    train.validate();
    dfs.validate();
    rollout.validate();
    auto need = [](const std::string& p, const char* what) {
      if (!p.empty() && !fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p);
    };
    if (oracle.rfind("synthetic:", 0) == 0) {
      need(oracle.substr(10), "domain file");
    } else if (oracle.rfind("remote:", 0) != 0) {
      throw ConfigError("oracle must be synthetic:<path> or remote:<endpoint>");
    }
    need(stock, "stock file");
    need(weights, "weights file");
    need(train_targets, "train target file");
    need(validation_targets, "validation target file");
    need(test_targets, "test target file");
  }

  /// FNV-1a over the canonical JSON dump, as 16 hex digits. The output
  /// directory is left out so reruns elsewhere hash the same.
  std::string hash() const {
    json j = to_json();
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
  }
};

/// The oracle and stock a config points at.
struct Environment {
  std::unique_ptr<ExpansionOracle> oracle;
  StockSet stock;
};

inline std::vector<std::string> read_id_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id) || id[0] == '#') continue;
    ids.push_back(id);
  }
  return ids;
}

inline Environment open_environment(const RunConfig& cfg) {
  Environment env;
  if (cfg.oracle.rfind("synthetic:", 0) == 0) {
    auto domain = SyntheticDomain::load(cfg.oracle.substr(10));
    env.stock = domain.stock_set();
    env.oracle = std::make_unique<SyntheticOracle>(std::move(domain));
  } else {
    auto remote = std::make_unique<RemoteOracle>(cfg.oracle.substr(7));
    env.stock = remote->stock_set();
    env.oracle = std::move(remote);
  }
  if (!cfg.stock.empty()) env.stock = StockSet::from_ids(read_id_lines(cfg.stock));
  return env;
}

inline std::vector<Item> load_targets(const std::string& path, const ExpansionOracle& oracle) {
  if (path.empty()) throw ConfigError("target file not configured");
  std::vector<Item> out;
  for (const auto& id : read_id_lines(path)) out.push_back(oracle.make_item(id));
  return out;
}

/// "<id>\t<optimal length>" per line.
inline void write_instances(const std::string& path, std::span<const Instance> inst) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& i : inst) out << i.target.id() << '\t' << i.optimal_length << '\n';
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json artifact_meta(const RunConfig& cfg, std::optional<std::uint64_t> weights_version) {
  return {{"config_hash", cfg.hash()},
          {"seed", cfg.seed},
          {"weights_version", weights_version ? json(*weights_version) : json()}};
}

/// Plans one target. Writes plan.json, route.json when solved and tree.dot
/// when requested. Exit 0 solved, 2 unsolved, 1 on error.
inline int cmd_plan(RunConfig cfg, const std::string& target_id, std::ostream& err = std::cerr) {
  try {
    cfg.finalize();
    if (!cfg.untrained && cfg.weights.empty()) {
      throw ConfigError("plan needs --weights or --untrained");
    }
    auto env = open_environment(cfg);
    std::optional<EgnWeights> weights;
    if (!cfg.untrained) weights = weights_io::load(cfg.weights);
    const Item target = env.oracle->make_item(target_id);
    Rng rng(derive_seed(cfg.seed, "plan/" + target_id));
    const fs::path out_dir(cfg.output_dir);
    const auto meta = artifact_meta(cfg, weights ? std::optional(weights->version) : std::nullopt);

    auto write_outcome = [&](const PlanOutcome& o, bool aborted) {
      json j = o.to_json();
      j["algorithm"] = cfg.untrained ? "eg-mcts-0" : "eg-mcts";
      j["aborted"] = aborted;
      j["meta"] = meta;
      write_json(out_dir / "plan.json", j);
      if (cfg.dump_tree) write_text(out_dir / "tree.dot", o.tree.to_dot());
    };

    std::optional<PlanOutcome> outcome;
    try {
      outcome = weights ? plan(target, env.stock, *env.oracle, EgnScorer(*weights), cfg.search, rng)
                        : plan(target, env.stock, *env.oracle, ConstantScorer{0.5}, cfg.search, rng);
    } catch (const PlanAborted& e) {
      write_outcome(e.partial(), true);
      throw;
    }
    write_outcome(*outcome, false);
    const fs::path route_path = out_dir / "route.json";
    if (outcome->solved) {
      json r = extract_route(outcome->tree).to_json();
      r["meta"] = meta;
      write_json(route_path, r);
      return kExitSolved;
    }
    fs::remove(route_path);
    return kExitUnsolved;
  } catch (const std::exception& e) {
    err << "egmcts plan: " << e.what() << '\n';
    return kExitError;
  }
}

/// Phase I. Per round: round_<i>/experience.ndjson, weights.bin (+ .json
/// sidecar) and report.json. Final: weights.bin (best round) and
/// train_summary.json.
inline int cmd_train(RunConfig cfg, std::ostream& log = std::cerr, std::ostream& err = std::cerr) {
  try {
    cfg.finalize();
    auto env = open_environment(cfg);
    auto train_set = load_targets(cfg.train_targets, *env.oracle);
    auto valid_set = load_targets(cfg.validation_targets, *env.oracle);
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    Phase1Hooks hooks;
    hooks.on_round = [&](const RoundArtifacts& a) {
      const fs::path dir = out_dir / ("round_" + std::to_string(a.round));
      fs::create_directories(dir);
      a.experience.write((dir / "experience.ndjson").string());
      weights_io::save(a.weights, (dir / "weights.bin").string());
      json r;
      r["round"] = a.round;
      r["experience_size"] = a.experience.size();
      r["epoch_losses"] = a.report.epoch_losses;
      r["initial_loss"] = a.report.initial_loss;
      r["final_loss"] = a.report.final_loss;
      r["validation"] = {{"success_rate", a.record.success_rate},
                         {"avg_iterations", a.record.avg_iterations}};
      r["meta"] = artifact_meta(cfg, a.weights.version);
      write_json(dir / "report.json", r);
      log << "round " << a.round << ": experience " << a.experience.size() << ", R_s "
          << a.record.success_rate << ", R_a " << a.record.avg_iterations << '\n';
    };
    auto res = run_phase1(train_set, valid_set, env.stock, *env.oracle, cfg.phase1, cfg.train,
                          cfg.seed, hooks);
    weights_io::save(res.best, (out_dir / "weights.bin").string());
    json s;
    s["best_round"] = res.best_round;
    auto& recs = s["rounds"] = json::array();
    for (const auto& r : res.records) {
      recs.push_back({{"round", r.round},
                      {"success_rate", r.success_rate},
                      {"avg_iterations", r.avg_iterations}});
    }
    s["meta"] = artifact_meta(cfg, res.best.version);
    write_json(out_dir / "train_summary.json", s);
    std::string csv = "round,R_s,R_a\n";
    for (const auto& r : res.records) {
      csv += std::to_string(r.round) + "," + detail::fixed(r.success_rate, 6) + "," +
             detail::fixed(r.avg_iterations, 6) + "\n";
    }
    write_text(out_dir / "validation.csv", csv);
    return 0;
  } catch (const std::exception& e) {
    err << "egmcts train: " << e.what() << '\n';
    return kExitError;
  }
}

inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> names{"eg-mcts", "eg-mcts-0", "greedy-dfs",
                                              "mcts-rollout"};
  return names;
}

/// Runs the named planners over the test targets and writes rows.csv,
/// efficiency.csv, quality.csv and bench.json.
inline int cmd_bench(RunConfig cfg, const std::vector<std::string>& algorithms,
                     std::ostream& err = std::cerr) {
  try {
    for (const auto& a : algorithms) {
      if (std::find(known_algorithms().begin(), known_algorithms().end(), a) ==
          known_algorithms().end()) {
        throw ConfigError("unknown algorithm: " + a);
      }
    }
    if (algorithms.empty()) throw ConfigError("no algorithms given");
    cfg.finalize();
    auto env = open_environment(cfg);
    auto targets = load_targets(cfg.test_targets, *env.oracle);
    std::optional<EgnWeights> weights;
    if (std::find(algorithms.begin(), algorithms.end(), "eg-mcts") != algorithms.end()) {
      if (cfg.weights.empty()) throw ConfigError("eg-mcts needs --weights");
      weights = weights_io::load(cfg.weights);
    }

    std::vector<BenchmarkRow> rows;
    for (const auto& algo : algorithms) {
      std::vector<std::optional<BenchmarkRow>> slots(targets.size());
      parallel_for(targets.size(), cfg.jobs, [&](std::size_t i) {
        const Item& t = targets[i];
        Rng rng(derive_seed(cfg.seed, algo + "/" + t.id()));
        auto run = [&]() -> PlanOutcome {
          if (algo == "eg-mcts")
            return plan(t, env.stock, *env.oracle, EgnScorer(*weights), cfg.search, rng);
          if (algo == "eg-mcts-0") return plan_eg_mcts_0(t, env.stock, *env.oracle, cfg.search, rng);
          if (algo == "greedy-dfs") return plan_greedy_dfs(t, env.stock, *env.oracle, cfg.dfs);
          return plan_mcts_rollout(t, env.stock, *env.oracle, cfg.rollout, rng);
        };
        auto o = run();
        BenchmarkRow r;
        r.algorithm = algo;
        r.target = t.id();
        r.solved = o.solved;
        r.iterations = o.solved ? *o.iterations_to_first_solution : o.iterations_run;
        r.expanded_reactions = o.expanded_reaction_nodes;
        r.expanded_molecules = o.expanded_molecule_nodes;
        if (o.solved) r.route_length = static_cast<int>(extract_route(o.tree).length());
        slots[i] = std::move(r);
      });
      for (auto& s : slots) rows.push_back(std::move(*s));
    }

    AggregateOptions opt;
    opt.iteration_limit = cfg.search.iteration_limit;
    auto summary = aggregate(rows, opt);
    const fs::path out_dir(cfg.output_dir);
    std::string csv = "algorithm,target,solved,iterations,expanded_reactions,expanded_molecules,route_length\n";
    for (const auto& r : rows) {
      csv += r.algorithm + "," + r.target + "," + (r.solved ? "1" : "0") + "," +
             std::to_string(r.iterations) + "," + std::to_string(r.expanded_reactions) + "," +
             std::to_string(r.expanded_molecules) + "," +
             (r.route_length ? std::to_string(*r.route_length) : std::string()) + "\n";
    }
    write_text(out_dir / "rows.csv", csv);
    write_text(out_dir / "efficiency.csv", efficiency_csv(summary));
    write_text(out_dir / "quality.csv", quality_csv(summary));
    json b;
    b["algorithms"] = algorithms;
    b["targets"] = targets.size();
    b["meta"] = artifact_meta(cfg, weights ? std::optional(weights->version) : std::nullopt);
    write_json(out_dir / "bench.json", b);
    return 0;
  } catch (const std::exception& e) {
    err << "egmcts bench: " << e.what() << '\n';
    return kExitError;
  }
}

struct NocOptions {
  std::string records;
  std::string stock;
  std::size_t min_outdegree = 2;
  int min_cost = 4;
  std::string output_dir = "noc";
  std::uint64_t seed = 0;
  SplitSizes split;
};

/// Builds the graph and writes nodes.csv, edges.csv, targets.txt and
/// split.json.
inline int cmd_noc(const NocOptions& o, std::ostream& err = std::cerr) {
  try {
    auto records = read_reaction_records(o.records);
    auto stock = read_id_lines(o.stock);
    auto g = build_noc(records, stock);
    auto targets = filter_targets(g, o.min_outdegree, o.min_cost);
    const fs::path dir(o.output_dir);
    write_text(dir / "nodes.csv", nodes_csv(g));
    write_text(dir / "edges.csv", edges_csv(g));
    std::string t;
    for (const auto& id : targets) t += id + "\n";
    write_text(dir / "targets.txt", t);
    write_json(dir / "split.json", split_manifest(targets, o.split, o.seed));
    return 0;
  } catch (const std::exception& e) {
    err << "egmcts noc: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace egmcts::cli
