#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egmcts/baselines.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"

namespace egmcts {

struct ReactionRecord {
  std::vector<std::string> reactants;
  std::vector<std::string> products;

  void validate() const {
    if (reactants.empty() || products.empty()) {
      throw InvalidParams("reaction record needs reactants and products");
    }
  }
};

struct NocNode {
  bool is_stock = false;
  int level = 0;  // construction pass that added the node; stock is 0
  std::set<std::string> parents;
  std::set<std::string> children;
  int cost = 0;

  std::size_t outdegree() const { return children.size(); }
  friend bool operator==(const NocNode&, const NocNode&) = default;
};

/// Reactant -> product graph. Ordered map so iteration is canonical.
struct NocGraph {
  std::map<std::string, NocNode> nodes;

  bool contains(const std::string& id) const { return nodes.count(id) != 0; }
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& [id, n] : nodes) e += n.children.size();
    return e;
  }
  friend bool operator==(const NocGraph&, const NocGraph&) = default;
};

/// Stock ids seed the graph. Each pass looks at the graph as it stood when
/// the pass began: every record whose reactants are all present adds its
/// missing products, with edges from each reactant. Edges only ever enter
/// nodes added in the current pass, so the result is acyclic and does not
/// depend on record order. Repeats until a pass adds nothing.
inline NocGraph build_noc(std::span<const ReactionRecord> records,
                          std::span<const std::string> stock_ids) {
  NocGraph g;
  for (const auto& s : stock_ids) g.nodes[s].is_stock = true;
  for (const auto& r : records) r.validate();

  std::vector<bool> done(records.size(), false);
  for (int level = 1;; ++level) {
    std::map<std::string, std::set<std::string>> added;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (done[i]) continue;
      const auto& r = records[i];
      bool ready = std::all_of(r.reactants.begin(), r.reactants.end(),
                               [&](const std::string& id) { return g.contains(id); });
      if (!ready) continue;
      done[i] = true;
      for (const auto& p : r.products) {
        if (g.contains(p)) continue;
        auto& parents = added[p];
        for (const auto& a : r.reactants) parents.insert(a);
      }
    }
    if (added.empty()) break;
    for (auto& [p, parents] : added) {
      auto& node = g.nodes[p];
      node.level = level;
      node.parents = std::move(parents);
      for (const auto& a : node.parents) g.nodes[a].children.insert(p);
    }
  }

  // Parents always sit at a lower level, so one pass in level order is a
  // topological sweep.
  std::vector<NocNode*> order;
  for (auto& [id, n] : g.nodes) order.push_back(&n);
  std::stable_sort(order.begin(), order.end(),
                   [](const NocNode* a, const NocNode* b) { return a->level < b->level; });
  for (NocNode* n : order) {
    if (n->is_stock || n->parents.empty()) {
      n->cost = 0;
      continue;
    }
    int best = 0;
    for (const auto& p : n->parents) best = std::max(best, g.nodes.at(p).cost);
    n->cost = best + 1;
  }
  return g;
}

inline NocGraph build_noc(std::span<const ReactionRecord> records, const StockSet& stock) {
  if (!stock.enumerable()) throw InvalidParams("NOC construction needs an enumerable stock");
  auto ids = stock.members();
  return build_noc(records, std::span<const std::string>(ids));
}

/// Longest path, in edges, back to a stock leaf.
inline int node_cost(const NocGraph& g, const std::string& id) {
  auto it = g.nodes.find(id);
  if (it == g.nodes.end()) throw UnknownNode(id);
  return it->second.cost;
}

inline std::size_t node_outdegree(const NocGraph& g, const std::string& id) {
  auto it = g.nodes.find(id);
  if (it == g.nodes.end()) throw UnknownNode(id);
  return it->second.outdegree();
}

/// Non-stock ids meeting both thresholds, sorted.
inline std::vector<std::string> filter_targets(const NocGraph& g, std::size_t min_outdegree,
                                               int min_cost) {
  std::vector<std::string> out;
  for (const auto& [id, n] : g.nodes) {
    if (!n.is_stock && n.outdegree() >= min_outdegree && n.cost >= min_cost) out.push_back(id);
  }
  return out;
}

struct ScreenResult {
  std::vector<std::string> hard;                   // unsolved within the limit
  std::map<std::string, std::string> errors;       // candidate -> oracle error
};

/// Keeps the candidates Greedy DFS cannot solve within `screen_limit`
/// oracle calls. Oracle failures are recorded per candidate.
inline ScreenResult hardness_screen(std::span<const std::string> candidates,
                                    const StockSet& stock, const ExpansionOracle& oracle,
                                    int screen_limit = 100, int k = 50) {
  ScreenResult res;
  DfsParams p;
  p.iteration_limit = screen_limit;
  p.k = k;
  for (const auto& id : candidates) {
    if (stock.contains(id)) continue;
    try {
      auto out = plan_greedy_dfs(oracle.make_item(id), stock, oracle, p);
      if (!out.solved) res.hard.push_back(id);
    } catch (const OracleUnavailable& e) {
      res.errors[id] = e.what();
    } catch (const OracleRequestFailed& e) {
      res.errors[id] = e.what();
    }
  }
  return res;
}

// --- files ---

/// One {"reactants":[...],"products":[...]} object per line.
inline std::vector<ReactionRecord> read_reaction_records(std::istream& in) {
  std::vector<ReactionRecord> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ReactionRecord r{j.at("reactants").get<std::vector<std::string>>(),
                       j.at("products").get<std::vector<std::string>>()};
      r.validate();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("reaction record line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<ReactionRecord> read_reaction_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_reaction_records(in);
}

inline std::string nodes_csv(const NocGraph& g) {
  std::ostringstream out;
  out << "id,is_stock,outdegree,cost\n";
  for (const auto& [id, n] : g.nodes) {
    out << id << ',' << (n.is_stock ? 1 : 0) << ',' << n.outdegree() << ',' << n.cost << '\n';
  }
  return out.str();
}

inline std::string edges_csv(const NocGraph& g) {
  std::ostringstream out;
  out << "source,target\n";
  for (const auto& [id, n] : g.nodes)
    for (const auto& c : n.children) out << id << ',' << c << '\n';
  return out.str();
}

struct SplitSizes {
  std::size_t train = 1193;
  std::size_t validation = 165;
  std::size_t test = 180;
};

/// Seeded random split. Sizes larger than the pool are filled in order
/// train, validation, test until the ids run out.
inline nlohmann::json split_manifest(std::vector<std::string> ids, const SplitSizes& sizes,
                                     std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, "split"));
  shuffle(ids, rng);
  auto take = [&, pos = std::size_t{0}](std::size_t n) mutable {
    std::vector<std::string> part;
    for (; n > 0 && pos < ids.size(); --n) part.push_back(ids[pos++]);
    std::sort(part.begin(), part.end());
    return part;
  };
  nlohmann::json j;
  j["seed"] = seed;
  j["train"] = take(sizes.train);
  j["validation"] = take(sizes.validation);
  j["test"] = take(sizes.test);
  return j;
}

}  // namespace egmcts
