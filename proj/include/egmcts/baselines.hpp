#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "egmcts/eg_mcts.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"
#include "egmcts/routes.hpp"

namespace egmcts {

/// EG-MCTS with every initial score fixed at 0.5.
inline PlanOutcome plan_eg_mcts_0(const Item& target, const StockSet& stock,
                                  const ExpansionOracle& oracle, const SearchParams& params,
                                  Rng& rng) {
  return plan(target, stock, oracle, ConstantScorer{0.5}, params, rng);
}

struct DfsParams {
  int max_depth = 10;
  int iteration_limit = 500;
  int k = 50;

  void validate() const {
    if (max_depth < 1) throw InvalidParams("max depth must be >= 1");
    if (iteration_limit < 1) throw InvalidParams("iteration limit must be >= 1");
  }
};

struct RolloutParams {
  int max_rollout_depth = 5;
  double c = 0.5;
  int iteration_limit = 500;
  int k = 50;

  void validate() const {
    if (max_rollout_depth < 0) throw InvalidParams("rollout depth must be >= 0");
    if (!(c > 0.0)) throw InvalidParams("c must be positive");
    if (iteration_limit < 1) throw InvalidParams("iteration limit must be >= 1");
  }
};

namespace detail {

using Steps = std::vector<std::pair<std::string, TemplateAction>>;

// Open (non-stock) molecules of a molecule-set state, kept sorted by id so
// "first unsolved molecule" is the lexicographic minimum.
inline void insert_sorted(std::vector<Item>& open, const Item& item) {
  open.insert(std::upper_bound(open.begin(), open.end(), item), item);
}

inline PlanOutcome finish(const Item& target, const StockSet& stock, bool solved,
                          std::uint64_t iterations, std::uint64_t reactions,
                          std::uint64_t molecules, const Steps& steps) {
  PlanOutcome out(solved ? solution_tree(target, stock, steps) : SearchTree(target, stock));
  out.solved = solved;
  if (solved) out.iterations_to_first_solution = iterations;
  out.iterations_run = iterations;
  out.expanded_reaction_nodes = reactions;
  out.expanded_molecule_nodes = molecules;
  return out;
}

}  // namespace detail

/// Depth-first search over molecule sets. Always expands the
/// lexicographically first unsolved molecule and tries its templates in
/// descending probability, backtracking on failure. Depth counts applied
/// reactions. Deterministic.
inline PlanOutcome plan_greedy_dfs(const Item& target, const StockSet& stock,
                                   const ExpansionOracle& oracle, const DfsParams& p) {
  p.validate();
  if (stock.contains(target)) return detail::finish(target, stock, true, 0, 0, 0, {});
  std::uint64_t calls = 0, reactions = 0, molecules = 0;
  detail::Steps path;
  const OracleConfig cfg{p.k};

  auto dfs = [&](auto&& self, const std::vector<Item>& open, int depth) -> bool {
    if (open.empty()) return true;
    if (depth >= p.max_depth || calls >= static_cast<std::uint64_t>(p.iteration_limit)) return false;
    const Item& m = open.front();
    auto actions = oracle.expand(m, cfg);
    ++calls;
    for (const auto& a : actions) {
      ++reactions;
      molecules += a.reactants.size();
      std::vector<Item> next(open.begin() + 1, open.end());
      for (const auto& r : a.reactants)
        if (!stock.contains(r)) detail::insert_sorted(next, r);
      path.emplace_back(m.id(), a);
      if (self(self, next, depth + 1)) return true;
      path.pop_back();
      if (calls >= static_cast<std::uint64_t>(p.iteration_limit)) return false;
    }
    return false;
  };
  const bool solved = dfs(dfs, std::vector<Item>{target}, 0);
  return detail::finish(target, stock, solved, calls, reactions, molecules, path);
}

/// Fraction of molecules in stock; molecules with no template count as
/// unsolved. 1.0 when nothing is open.
inline double stock_fraction(std::size_t solved, std::size_t open) {
  const std::size_t total = solved + open;
  return total == 0 ? 1.0 : static_cast<double>(solved) / static_cast<double>(total);
}

/// Random playout from a molecule-set state: up to `max_depth` template
/// applications to the first open molecule, each drawn by prior. A molecule
/// with no template is dropped and counts as unsolved. Returns the stock
/// fraction of the reached state.
template <class ActionsOf>
double rollout_value(std::vector<Item> open, std::size_t solved, int max_depth,
                     const StockSet& stock, ActionsOf&& actions_of, Rng& rng) {
  std::size_t dead = 0;
  for (int d = 0; d < max_depth && !open.empty(); ++d) {
    const Item m = open.front();
    open.erase(open.begin());
    const std::vector<TemplateAction>& acts = actions_of(m);
    if (acts.empty()) {
      ++dead;
      continue;
    }
    double total = 0.0;
    for (const auto& a : acts) total += a.probability;
    std::size_t pick = acts.size() - 1;
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      if (u < acts[i].probability) {
        pick = i;
        break;
      }
      u -= acts[i].probability;
    }
    for (const auto& r : acts[pick].reactants) {
      if (stock.contains(r))
        ++solved;
      else
        detail::insert_sorted(open, r);
    }
  }
  return stock_fraction(solved, open.size() + dead);
}

/// MCTS over molecule-set states with random playouts as the leaf value.
/// Each iteration expands one state (one counted oracle call), plays out up
/// to `max_rollout_depth` random template applications (sampled by prior)
/// from it and backs up the reached state's stock fraction. Selection uses
/// the EG-MCTS PUCT shape with the mean playout value in place of Q.
inline PlanOutcome plan_mcts_rollout(const Item& target, const StockSet& stock,
                                     const ExpansionOracle& oracle, const RolloutParams& p,
                                     Rng& rng) {
  p.validate();
  if (stock.contains(target)) return detail::finish(target, stock, true, 0, 0, 0, {});
  const OracleConfig cfg{p.k};

  struct State {
    std::vector<Item> open;
    std::size_t solved = 0;
    std::uint32_t parent = UINT32_MAX;
    std::pair<std::string, TemplateAction> via;
    double prior = 1.0;
    std::vector<std::uint32_t> children;
    bool expanded = false;
    bool dead = false;
    std::uint64_t n = 0;
    double w = 0.0;
  };
  std::vector<State> nodes;
  State root;
  root.open = {target};
  nodes.push_back(std::move(root));

  std::map<std::string, std::vector<TemplateAction>> playout_cache;
  auto playout_actions = [&](const Item& m) -> const std::vector<TemplateAction>& {
    auto it = playout_cache.find(m.id());
    if (it == playout_cache.end()) it = playout_cache.emplace(m.id(), oracle.expand(m, cfg)).first;
    return it->second;
  };

  auto rollout = [&](const std::vector<Item>& open, std::size_t solved) {
    return rollout_value(open, solved, p.max_rollout_depth, stock, playout_actions, rng);
  };

  auto mark_dead = [&](std::uint32_t id) {
    while (true) {
      nodes[id].dead = true;
      const auto parent = nodes[id].parent;
      if (parent == UINT32_MAX) return;
      const auto& sib = nodes[parent].children;
      if (!std::all_of(sib.begin(), sib.end(), [&](std::uint32_t c) { return nodes[c].dead; })) return;
      id = parent;
    }
  };

  std::uint64_t iterations = 0, reactions = 0, molecules = 0;
  for (int it = 1; it <= p.iteration_limit; ++it) {
    if (nodes[0].dead) break;
    std::uint32_t cur = 0;
    while (nodes[cur].expanded) {
      std::uint32_t best = UINT32_MAX;
      double best_score = -INFINITY;
      for (auto c : nodes[cur].children) {
        const auto& ch = nodes[c];
        if (ch.dead) continue;
        const double n = static_cast<double>(ch.n);
        const double q = ch.n ? ch.w / n : 0.0;
        const double s = q / std::max(1.0, n) +
                         p.c * ch.prior * std::sqrt(static_cast<double>(nodes[cur].n)) / (1.0 + n);
        if (best == UINT32_MAX || s > best_score) {
          best = c;
          best_score = s;
        }
      }
      cur = best;
    }

    const Item m = nodes[cur].open.front();
    auto actions = oracle.expand(m, cfg);
    ++iterations;
    nodes[cur].expanded = true;
    double value = 0.0;
    std::uint32_t solved_child = UINT32_MAX;
    if (actions.empty()) {
      mark_dead(cur);
    } else {
      for (auto& a : actions) {
        State child;
        child.open.assign(nodes[cur].open.begin() + 1, nodes[cur].open.end());
        child.solved = nodes[cur].solved;
        for (const auto& r : a.reactants) {
          if (stock.contains(r))
            ++child.solved;
          else
            detail::insert_sorted(child.open, r);
        }
        child.parent = cur;
        child.prior = a.probability;
        child.via = {m.id(), std::move(a)};
        ++reactions;
        molecules += child.via.second.reactants.size();
        const auto id = static_cast<std::uint32_t>(nodes.size());
        if (child.open.empty() && solved_child == UINT32_MAX) solved_child = id;
        nodes.push_back(std::move(child));
        nodes[cur].children.push_back(id);
      }
      value = solved_child != UINT32_MAX ? 1.0 : rollout(nodes[cur].open, nodes[cur].solved);
    }
    for (std::uint32_t b = cur;; b = nodes[b].parent) {
      nodes[b].n += 1;
      nodes[b].w += value;
      if (nodes[b].parent == UINT32_MAX) break;
    }
    if (solved_child != UINT32_MAX) {
      detail::Steps steps;
      for (std::uint32_t b = solved_child; nodes[b].parent != UINT32_MAX; b = nodes[b].parent) {
        steps.push_back(nodes[b].via);
      }
      std::reverse(steps.begin(), steps.end());
      return detail::finish(target, stock, true, iterations, reactions, molecules, steps);
    }
  }
  return detail::finish(target, stock, false, iterations, reactions, molecules, {});
}

}  // namespace egmcts
