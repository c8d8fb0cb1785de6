#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "egmcts/egn.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"
#include "egmcts/search_tree.hpp"

namespace egmcts {

struct SearchParams {
  double c = 0.5;   // exploration constant
  double z = 10.0;  // terminal reward magnitude
  int iteration_limit = 500;
  int k = 50;
  bool stop_on_first_solution = true;

  void validate() const {
    if (!(c > 0.0)) throw InvalidParams("c must be positive");
    if (!(z > 1.0)) throw InvalidParams("z must exceed 1");
    if (iteration_limit < 1) throw InvalidParams("iteration limit must be >= 1");
    if (k < 1) throw InvalidParams("k must be >= 1");
  }

  OracleConfig oracle_config() const { return OracleConfig{k}; }
};

struct PlanOutcome {
  explicit PlanOutcome(SearchTree t) : tree(std::move(t)) {}

  SearchTree tree;
  bool solved = false;
  std::optional<std::uint64_t> iterations_to_first_solution;
  std::uint64_t iterations_run = 0;
  std::uint64_t expanded_reaction_nodes = 0;
  std::uint64_t expanded_molecule_nodes = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["target"] = tree.molecule(tree.root()).item.id();
    j["solved"] = solved;
    j["iterations_to_first_solution"] =
        iterations_to_first_solution ? nlohmann::json(*iterations_to_first_solution)
                                     : nlohmann::json();
    j["iterations_run"] = iterations_run;
    j["expanded_reaction_nodes"] = expanded_reaction_nodes;
    j["expanded_molecule_nodes"] = expanded_molecule_nodes;
    return j;
  }
};

/// Raised when the oracle drops out mid-search; carries the partial result.
class PlanAborted : public OracleUnavailable {
 public:
  PlanAborted(const std::string& what, std::shared_ptr<const PlanOutcome> partial)
      : OracleUnavailable(what), partial_(std::move(partial)) {}
  const PlanOutcome& partial() const { return *partial_; }

 private:
  std::shared_ptr<const PlanOutcome> partial_;
};

/// Produces the initial score Q0 for each action of one expansion.
template <class S>
concept ActionScorer = requires(const S& s, const Item& m, std::span<const TemplateAction> a) {
  { s(m, a) } -> std::same_as<std::vector<double>>;
};

/// Q0 fixed for every action (0.5 gives the non-learning planner).
struct ConstantScorer {
  double value = 0.5;
  std::vector<double> operator()(const Item&, std::span<const TemplateAction> actions) const {
    return std::vector<double>(actions.size(), value);
  }
};

/// Q0 from the guidance network in eval mode. Holds a reference to an
/// immutable weights snapshot.
class EgnScorer {
 public:
  explicit EgnScorer(const EgnWeights& w) : w_(&w) {}

  std::vector<double> operator()(const Item& m, std::span<const TemplateAction> actions) const {
    std::vector<std::uint16_t> active;
    const auto& mf = m.fingerprint();
    for (std::size_t i = 0; i < kFingerprintBits; ++i)
      if (mf[i]) active.push_back(static_cast<std::uint16_t>(i));
    const std::size_t mol_bits = active.size();
    std::vector<double> out;
    out.reserve(actions.size());
    for (const auto& a : actions) {
      active.resize(mol_bits);
      for (std::size_t i = 0; i < kFingerprintBits; ++i)
        if (a.fingerprint[i]) active.push_back(static_cast<std::uint16_t>(kFingerprintBits + i));
      out.push_back(forward_sparse(*w_, active));
    }
    return out;
  }

 private:
  const EgnWeights* w_;
};

/// Exploitation Q/max(1,N) plus prior-weighted exploration. N' is the update
/// count of the grandparent reaction, or the summed sibling count directly
/// below the root.
inline double puct_score(const SearchTree& tree, NodeId parent, NodeId child, double c) {
  const auto& m = tree.molecule(parent);
  const auto& r = tree.reaction(child);
  double n_prime = 0.0;
  if (m.parent != kNoNode) {
    n_prime = static_cast<double>(tree.reaction(m.parent).n);
  } else {
    for (NodeId s : m.children) n_prime += static_cast<double>(tree.reaction(s).n);
  }
  const double n = static_cast<double>(r.n);
  return r.q_bar / std::max(1.0, n) + c * r.action.probability * std::sqrt(n_prime) / (1.0 + n);
}

/// Descends from the root to an unexpanded, undecided molecule node.
inline NodeId select(const SearchTree& tree, double c, Rng& rng) {
  NodeId cur = tree.root();
  if (tree.molecule(cur).status == Status::Failure) {
    throw NoSelectableLeaf("root is proved unsuccessful");
  }
  std::vector<NodeId> pool;
  while (true) {
    const auto& m = tree.molecule(cur);
    if (!m.expanded) {
      if (is_terminal(m.status)) throw NoSelectableLeaf("leaf is decided");
      return cur;
    }
    NodeId best = kNoNode;
    double best_score = -INFINITY;
    for (NodeId rc : m.children) {
      if (is_terminal(tree.reaction(rc).status)) continue;
      const double s = puct_score(tree, cur, rc, c);
      if (best == kNoNode || s > best_score) {
        best = rc;
        best_score = s;
      }
    }
    if (best == kNoNode) throw NoSelectableLeaf("no undecided child under " + m.item.id());
    const auto& r = tree.reaction(best);
    pool.clear();
    for (NodeId mc : r.children) {
      const auto& cm = tree.molecule(mc);
      if (!cm.expanded && !is_terminal(cm.status)) pool.push_back(mc);
    }
    if (pool.empty()) {
      for (NodeId mc : r.children)
        if (tree.molecule(mc).status != Status::Success) pool.push_back(mc);
    }
    if (pool.empty()) throw NoSelectableLeaf("reaction has no open child");
    cur = pool[uniform_index(rng, pool.size())];
  }
}

/// Queries the oracle for `leaf`, drops actions that regenerate an item on
/// the path to the root, scores the rest and attaches them.
template <ActionScorer Scorer>
void expand(SearchTree& tree, NodeId leaf, const ExpansionOracle& oracle, const Scorer& scorer,
            const SearchParams& params) {
  const Item item = tree.molecule(leaf).item;
  auto actions = oracle.expand(item, params.oracle_config());

  std::unordered_set<std::string> ancestors;
  for (NodeId m = leaf;;) {
    const auto& node = tree.molecule(m);
    ancestors.insert(node.item.id());
    if (node.parent == kNoNode) break;
    m = tree.reaction(node.parent).parent;
  }
  std::vector<TemplateAction> kept;
  kept.reserve(actions.size());
  for (auto& a : actions) {
    bool loops = false;
    for (const auto& r : a.reactants) loops = loops || ancestors.count(r.id()) > 0;
    if (!loops) kept.push_back(std::move(a));
  }
  auto q0s = scorer(item, std::span<const TemplateAction>(kept));
  tree.attach_expansion(leaf, std::move(kept), q0s);
}

/// +z when proved successful, -z when proved unsuccessful, otherwise the
/// mean V_m of the reactant nodes.
inline double reward(const SearchTree& tree, NodeId rxn, double z) {
  const auto& r = tree.reaction(rxn);
  if (r.status == Status::Success) return z;
  if (r.status == Status::Failure) return -z;
  double sum = 0.0;
  for (NodeId c : r.children) sum += tree.molecule(c).v_m;
  return sum / static_cast<double>(r.children.size());
}

/// Backs values up from a freshly expanded leaf. Statuses are settled
/// first; then molecule nodes take the best child Q (skipped once proved
/// unsuccessful) and reaction nodes record one reward each.
inline void update(SearchTree& tree, NodeId leaf, double z) {
  tree.propagate_status(NodeRef::molecule(leaf));
  NodeId cur = leaf;
  while (true) {
    auto& m = tree.molecule(cur);
    if (!m.children.empty() && m.status != Status::Failure) {
      double best = -INFINITY;
      for (NodeId rc : m.children) best = std::max(best, tree.reaction(rc).q_bar);
      m.v_m = best;
    }
    if (m.parent == kNoNode) break;
    const NodeId rxn = m.parent;
    tree.record_reward(rxn, reward(tree, rxn, z));
    cur = tree.reaction(rxn).parent;
  }
}

/// The select / expand / update loop. One oracle call per iteration.
template <ActionScorer Scorer>
PlanOutcome plan(const Item& target, const StockSet& stock, const ExpansionOracle& oracle,
                 const Scorer& scorer, const SearchParams& params, Rng& rng) {
  params.validate();
  PlanOutcome out(SearchTree(target, stock));
  auto& tree = out.tree;
  if (tree.route_exists()) {
    out.solved = true;
    out.iterations_to_first_solution = 0;
    return out;
  }
  for (int it = 1; it <= params.iteration_limit; ++it) {
    NodeId leaf;
    try {
      leaf = select(tree, params.c, rng);
    } catch (const NoSelectableLeaf&) {
      break;
    }
    try {
      expand(tree, leaf, oracle, scorer, params);
    } catch (const OracleUnavailable& e) {
      out.expanded_molecule_nodes = tree.expanded_molecule_nodes();
      out.expanded_reaction_nodes = tree.expanded_reaction_nodes();
      throw PlanAborted(e.what(), std::make_shared<const PlanOutcome>(std::move(out)));
    }
    tree.count_iteration();
    out.iterations_run = static_cast<std::uint64_t>(it);
    update(tree, leaf, params.z);
    if (tree.route_exists() && !out.iterations_to_first_solution) {
      out.solved = true;
      out.iterations_to_first_solution = static_cast<std::uint64_t>(it);
      if (params.stop_on_first_solution) break;
    }
    if (tree.molecule(tree.root()).status == Status::Failure) break;
  }
  out.expanded_molecule_nodes = tree.expanded_molecule_nodes();
  out.expanded_reaction_nodes = tree.expanded_reaction_nodes();
  return out;
}

}  // namespace egmcts
