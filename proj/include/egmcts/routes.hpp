#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <utility>
#include <string>
#include <vector>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/search_tree.hpp"

namespace egmcts {

struct RouteStep {
  std::string product;
  std::vector<std::string> reactants;
  std::string template_id;

  friend bool operator==(const RouteStep&, const RouteStep&) = default;
};

/// Reaction list in top-down order.
struct Route {
  std::string target;
  std::vector<RouteStep> steps;

  std::size_t length() const { return steps.size(); }

  /// Items that end the route (never decomposed further), sorted.
  std::vector<std::string> leaves() const {
    std::multiset<std::string> open{target};
    for (const auto& s : steps) {
      if (auto it = open.find(s.product); it != open.end()) open.erase(it);
      open.insert(s.reactants.begin(), s.reactants.end());
    }
    return {open.begin(), open.end()};
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["target"] = target;
    auto& st = j["steps"] = nlohmann::json::array();
    for (const auto& s : steps) {
      st.push_back({{"product", s.product}, {"reactants", s.reactants}, {"template", s.template_id}});
    }
    j["stock_leaves"] = leaves();
    return j;
  }

  static Route from_json(const nlohmann::json& j) {
    Route r;
    r.target = j.at("target").get<std::string>();
    for (const auto& s : j.at("steps")) {
      r.steps.push_back({s.at("product").get<std::string>(),
                         s.at("reactants").get<std::vector<std::string>>(),
                         s.value("template", std::string())});
    }
    return r;
  }

  static Route load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open route file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
  }
};

/// Breadth-first walk from the root through one successful reaction per
/// non-stock molecule (highest q_bar, ties by insertion order).
inline Route extract_route(const SearchTree& tree) {
  const auto& root = tree.molecule(tree.root());
  if (root.status != Status::Success) throw NotSolved("root of " + root.item.id());
  Route route;
  route.target = root.item.id();
  std::deque<NodeId> queue{tree.root()};
  while (!queue.empty()) {
    const NodeId mid = queue.front();
    queue.pop_front();
    const auto& m = tree.molecule(mid);
    if (tree.stock().contains(m.item)) continue;
    NodeId pick = kNoNode;
    for (NodeId rc : m.children) {
      const auto& r = tree.reaction(rc);
      if (r.status != Status::Success) continue;
      if (pick == kNoNode || r.q_bar > tree.reaction(pick).q_bar) pick = rc;
    }
    if (pick == kNoNode) {
      throw InconsistentTree("molecule " + m.item.id() + " on the success path has no solved reaction");
    }
    const auto& r = tree.reaction(pick);
    RouteStep step{m.item.id(), {}, r.action.template_id};
    for (NodeId c : r.children) {
      step.reactants.push_back(tree.molecule(c).item.id());
      queue.push_back(c);
    }
    route.steps.push_back(std::move(step));
  }
  return route;
}

/// True iff every step decomposes an open item (the target or a reactant of
/// an earlier step) and every item left open is in stock.
inline bool validate_route(const Route& route, const StockSet& stock) {
  if (route.target.empty()) return false;
  std::multiset<std::string> open{route.target};
  for (const auto& s : route.steps) {
    auto it = open.find(s.product);
    if (it == open.end() || s.reactants.empty()) return false;
    open.erase(it);
    open.insert(s.reactants.begin(), s.reactants.end());
  }
  return std::all_of(open.begin(), open.end(),
                     [&](const std::string& id) { return stock.contains(id); });
}

struct MatchReport {
  std::size_t matched_steps = 0;
  std::size_t total_steps = 0;
  double degree = 0.0;
};

/// In-order step matching against a reference route. A generated step
/// matches a reference step at or after the cursor with the same product
/// whose reactant multiset contains the generated one (by-products in the
/// reference are ignored).
inline MatchReport matching_degree(const Route& generated, const Route& reference) {
  if (generated.steps.empty() || reference.steps.empty()) {
    throw EmptyRoute("matching needs two non-empty routes");
  }
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  MatchReport rep;
  rep.total_steps = generated.steps.size();
  std::size_t cursor = 0;
  for (const auto& g : generated.steps) {
    const auto greact = sorted(g.reactants);
    for (std::size_t j = cursor; j < reference.steps.size(); ++j) {
      const auto& r = reference.steps[j];
      if (r.product != g.product) continue;
      const auto rreact = sorted(r.reactants);
      if (std::includes(rreact.begin(), rreact.end(), greact.begin(), greact.end())) {
        ++rep.matched_steps;
        cursor = j + 1;
        break;
      }
    }
  }
  rep.degree = static_cast<double>(rep.matched_steps) / static_cast<double>(rep.total_steps);
  return rep;
}

/// Builds a solved AND-OR tree holding exactly the given decomposition.
/// Used by the molecule-set planners so every planner reports the same
/// outcome schema. `steps` pairs each product id with the action applied.
inline SearchTree solution_tree(const Item& target, const StockSet& stock,
                                const std::vector<std::pair<std::string, TemplateAction>>& steps) {
  SearchTree tree(target, stock);
  std::map<std::string, std::deque<const TemplateAction*>> by_product;
  for (const auto& [product, action] : steps) by_product[product].push_back(&action);
  std::deque<NodeId> queue{tree.root()};
  while (!queue.empty()) {
    const NodeId mid = queue.front();
    queue.pop_front();
    const auto& m = tree.molecule(mid);
    if (m.expanded) continue;
    auto it = by_product.find(m.item.id());
    if (it == by_product.end() || it->second.empty()) {
      throw InconsistentTree("no step decomposes " + m.item.id());
    }
    std::vector<TemplateAction> one{*it->second.front()};
    it->second.pop_front();
    const double q0[] = {kUnvisitedValue};
    tree.attach_expansion(mid, std::move(one), q0);
    const NodeId rid = tree.molecule(mid).children.back();
    for (NodeId c : tree.reaction(rid).children) queue.push_back(c);
  }
  for (NodeId id = static_cast<NodeId>(tree.molecule_count()); id-- > 0;) {
    tree.propagate_status(NodeRef::molecule(id));
  }
  return tree;
}

}  // namespace egmcts
