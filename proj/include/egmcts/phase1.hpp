#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "egmcts/eg_mcts.hpp"
#include "egmcts/egn.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/parallel.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"
#include "egmcts/search_tree.hpp"

namespace egmcts {

/// (molecule, template, concrete reactant set).
struct ExperienceKey {
  std::string item;
  std::string template_id;
  std::string reactants;

  friend auto operator<=>(const ExperienceKey&, const ExperienceKey&) = default;
};

struct RawExperience {
  ExperienceKey key;
  Fingerprint mol;
  Fingerprint tmpl;
  double q_bar = 0.0;
};

struct ExperienceEntry {
  Fingerprint mol;
  Fingerprint tmpl;
  std::vector<double> observations;  // kept sorted

  std::size_t occurrences() const { return observations.size(); }

  /// Arithmetic mean, summed in sorted order so the result does not depend
  /// on merge order.
  double mean() const {
    double sum = 0.0;
    for (double v : observations) sum += v;
    return sum / static_cast<double>(observations.size());
  }
};

struct ExperienceSet {
  std::map<ExperienceKey, ExperienceEntry> entries;
  int round = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  /// One line per key, sorted by key.
  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& [k, e] : entries) {
      nlohmann::json j{{"item", k.item},
                       {"template", k.template_id},
                       {"reactants", k.reactants},
                       {"mean", e.mean()},
                       {"count", e.occurrences()}};
      out << j.dump() << '\n';
    }
  }
};

/// One record per reaction node: its parent molecule, template, reactant
/// set and final q_bar.
inline std::vector<RawExperience> collect_experience(const SearchTree& tree) {
  std::vector<RawExperience> out;
  out.reserve(tree.reaction_count());
  for (NodeId r = 0; r < tree.reaction_count(); ++r) {
    const auto& rn = tree.reaction(r);
    const auto& m = tree.molecule(rn.parent);
    out.push_back({{m.item.id(), rn.action.template_id, reactant_key(rn.action.reactants)},
                   m.item.fingerprint(),
                   rn.action.fingerprint,
                   rn.q_bar});
  }
  return out;
}

/// Folds raw observations in; repeated keys average over all occurrences.
inline ExperienceSet merge_experience(std::span<const RawExperience> raw, ExperienceSet into) {
  for (const auto& r : raw) {
    auto [it, fresh] = into.entries.try_emplace(r.key);
    if (fresh) {
      it->second.mol = r.mol;
      it->second.tmpl = r.tmpl;
    }
    auto& obs = it->second.observations;
    obs.insert(std::upper_bound(obs.begin(), obs.end(), r.q_bar), r.q_bar);
  }
  return into;
}

/// Training pairs with targets clamped into the network's codomain.
inline std::vector<SparseSample> training_samples(const ExperienceSet& data) {
  std::vector<SparseSample> out;
  out.reserve(data.size());
  for (const auto& [k, e] : data.entries) {
    out.push_back(to_sparse(e.mol, e.tmpl, std::clamp(e.mean(), 0.0, 1.0)));
  }
  return out;
}

inline std::pair<EgnWeights, TrainReport> train(const EgnWeights& w, const ExperienceSet& data,
                                                const TrainConfig& cfg) {
  if (data.empty()) throw EmptyDataset("empty experience set");
  auto samples = training_samples(data);
  return train(w, std::span<const SparseSample>(samples), cfg);
}

struct ValidationRecord {
  int round = 0;
  double success_rate = 0.0;    // R_s
  double avg_iterations = 0.0;  // R_a, unsolved counted at the limit
};

struct Phase1Params {
  double epsilon1 = 0.015;
  double epsilon2 = 3.0;
  int window = 5;
  int max_rounds = 10;
  bool accumulate = false;  // train on the union of all rounds' experience
  int jobs = 1;
  SearchParams search;

  void validate() const {
    if (!(epsilon1 > 0.0 && epsilon2 > 0.0)) throw InvalidParams("epsilons must be positive");
    if (window < 1) throw InvalidParams("window must be >= 1");
    if (max_rounds < 1) throw InvalidParams("max rounds must be >= 1");
    search.validate();
  }
};

/// Loop condition. `history` holds the records of the last `window`
/// rounds before `current`; an empty history (round 1) always continues.
inline bool should_continue(std::span<const ValidationRecord> history,
                            const ValidationRecord& current, const Phase1Params& p) {
  if (history.empty()) return true;
  double best_rate = history.front().success_rate;
  double best_iter = history.front().avg_iterations;
  for (const auto& h : history) {
    best_rate = std::max(best_rate, h.success_rate);
    best_iter = std::min(best_iter, h.avg_iterations);
  }
  return current.success_rate - best_rate > p.epsilon1 ||
         best_iter - current.avg_iterations > p.epsilon2;
}

struct TargetResult {
  bool solved = false;
  std::uint64_t iterations = 0;
};

/// Plans every target with a fixed scorer; per-target seeds come from
/// (seed, label, target id).
template <ActionScorer Scorer>
std::vector<PlanOutcome> plan_all(std::span<const Item> targets, const StockSet& stock,
                                  const ExpansionOracle& oracle, const Scorer& scorer,
                                  const SearchParams& params, std::uint64_t seed,
                                  const std::string& label, int jobs) {
  std::vector<std::optional<PlanOutcome>> slots(targets.size());
  parallel_for(targets.size(), jobs, [&](std::size_t i) {
    Rng rng(derive_seed(seed, label + "/" + targets[i].id()));
    slots[i].emplace(plan(targets[i], stock, oracle, scorer, params, rng));
  });
  std::vector<PlanOutcome> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline ValidationRecord summarize(std::span<const PlanOutcome> outcomes, int round, int limit) {
  ValidationRecord rec;
  rec.round = round;
  if (outcomes.empty()) return rec;
  double solved = 0.0, iters = 0.0;
  for (const auto& o : outcomes) {
    if (o.solved) {
      solved += 1.0;
      iters += static_cast<double>(*o.iterations_to_first_solution);
    } else {
      iters += limit;
    }
  }
  rec.success_rate = solved / static_cast<double>(outcomes.size());
  rec.avg_iterations = iters / static_cast<double>(outcomes.size());
  return rec;
}

struct RoundArtifacts {
  int round;
  const ExperienceSet& experience;
  const EgnWeights& weights;
  const TrainReport& report;
  const ValidationRecord& record;
};

struct Phase1Hooks {
  /// Replaces validation planning (used to script loop-condition tests).
  std::function<ValidationRecord(int round, const EgnWeights&)> validator;
  std::function<void(const RoundArtifacts&)> on_round;
};

struct Phase1Result {
  EgnWeights best;
  int best_round = 0;
  std::vector<ValidationRecord> records;
  std::vector<TrainReport> reports;
};

/// Self-play training. Round i plans the training targets with the
/// previous weights, merges the trees' experience, trains, validates, and
/// repeats while the loop condition holds and max_rounds is not reached.
/// Returns the weights of the best validation round (success rate first,
/// then fewer iterations).
inline Phase1Result run_phase1(std::span<const Item> train_targets,
                               std::span<const Item> validation_targets, const StockSet& stock,
                               const ExpansionOracle& oracle, const Phase1Params& p,
                               const TrainConfig& train_cfg, std::uint64_t seed,
                               const Phase1Hooks& hooks = {}) {
  p.validate();
  train_cfg.validate();
  if (train_targets.empty() || validation_targets.empty()) {
    throw InvalidParams("training and validation targets must be non-empty");
  }
  std::set<std::string> train_ids;
  for (const auto& t : train_targets) train_ids.insert(t.id());
  for (const auto& v : validation_targets) {
    if (train_ids.count(v.id())) throw InvalidParams("target " + v.id() + " is in both sets");
  }

  Phase1Result res;
  EgnWeights current = EgnWeights::glorot(derive_seed(seed, "theta0"));
  ExperienceSet accumulated;
  for (int round = 1; round <= p.max_rounds; ++round) {
    auto outcomes = plan_all(train_targets, stock, oracle, EgnScorer(current), p.search, seed,
                             "train/" + std::to_string(round), p.jobs);
    ExperienceSet fresh;
    ExperienceSet& pool = p.accumulate ? accumulated : fresh;
    for (const auto& o : outcomes) {
      auto raw = collect_experience(o.tree);
      pool = merge_experience(raw, std::move(pool));
    }
    pool.round = round;

    TrainConfig cfg = train_cfg;
    cfg.seed = derive_seed(train_cfg.seed ^ seed, static_cast<std::uint64_t>(round));
    auto [next, report] = train(current, pool, cfg);
    next.round = static_cast<std::uint64_t>(round);
    current = std::move(next);

    ValidationRecord rec;
    if (hooks.validator) {
      rec = hooks.validator(round, current);
    } else {
      auto val = plan_all(validation_targets, stock, oracle, EgnScorer(current), p.search, seed,
                          "validate/" + std::to_string(round), p.jobs);
      rec = summarize(val, round, p.search.iteration_limit);
    }
    rec.round = round;

    if (res.records.empty() || rec.success_rate > res.records[res.best_round - 1].success_rate ||
        (rec.success_rate == res.records[res.best_round - 1].success_rate &&
         rec.avg_iterations < res.records[res.best_round - 1].avg_iterations)) {
      res.best = current;
      res.best_round = round;
    }
    if (hooks.on_round) hooks.on_round({round, pool, current, report, rec});

    const std::size_t from =
        res.records.size() > static_cast<std::size_t>(p.window) ? res.records.size() - p.window : 0;
    const bool go_on =
        should_continue(std::span<const ValidationRecord>(res.records).subspan(from), rec, p);
    res.records.push_back(rec);
    res.reports.push_back(std::move(report));
    if (!go_on) break;
  }
  return res;
}

}  // namespace egmcts
