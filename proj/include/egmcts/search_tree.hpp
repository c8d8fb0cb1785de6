#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"

namespace egmcts {

enum class Status : std::uint8_t { Unknown, Success, Failure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Success: return "success";
    case Status::Failure: return "failure";
    default: return "unknown";
  }
}

inline bool is_terminal(Status s) { return s != Status::Unknown; }

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

inline constexpr double kStockValue = 1.0;
inline constexpr double kUnvisitedValue = 0.5;

/// OR node.
struct MoleculeNode {
  Item item;
  double v_m = kUnvisitedValue;
  Status status = Status::Unknown;
  bool expanded = false;
  std::vector<NodeId> children;  // reaction nodes
  NodeId parent = kNoNode;       // reaction node
  int depth = 0;                 // molecule levels below the root
};

/// AND node. q_bar == q_history_sum / (n + 1); the initial score is part of
/// the sum but not of n.
struct ReactionNode {
  TemplateAction action;
  double q_bar = 0.0;
  std::uint64_t n = 0;
  double q_history_sum = 0.0;
  Status status = Status::Unknown;
  std::vector<NodeId> children;  // molecule nodes
  NodeId parent = kNoNode;       // molecule node
};

struct NodeRef {
  enum class Kind : std::uint8_t { Molecule, Reaction } kind;
  NodeId id;

  static NodeRef molecule(NodeId id) { return {Kind::Molecule, id}; }
  static NodeRef reaction(NodeId id) { return {Kind::Reaction, id}; }
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

/// AND-OR tree rooted at the planning target. Nodes live in two arenas and
/// refer to each other by index, so a tree is a movable value. Repeated
/// items under different branches are distinct nodes.
class SearchTree {
 public:
  SearchTree(Item target, StockSet stock) : stock_(std::move(stock)) {
    new_molecule(std::move(target), kNoNode, 0);
  }

  NodeId root() const { return 0; }
  const StockSet& stock() const { return stock_; }

  MoleculeNode& molecule(NodeId id) { return molecules_.at(id); }
  const MoleculeNode& molecule(NodeId id) const { return molecules_.at(id); }
  ReactionNode& reaction(NodeId id) { return reactions_.at(id); }
  const ReactionNode& reaction(NodeId id) const { return reactions_.at(id); }

  std::size_t molecule_count() const { return molecules_.size(); }
  std::size_t reaction_count() const { return reactions_.size(); }

  // Nodes created by expansions; the root is not counted.
  std::uint64_t expanded_molecule_nodes() const { return molecules_.size() - 1; }
  std::uint64_t expanded_reaction_nodes() const { return reactions_.size(); }

  std::uint64_t iterations() const { return iterations_; }
  void count_iteration() { ++iterations_; }

  /// Adds one reaction node per action, scored by the matching q0, with one
  /// molecule child per reactant. Stock reactants are created solved.
  void attach_expansion(NodeId leaf, std::vector<TemplateAction> actions,
                        std::span<const double> q0s) {
    auto& m = molecule(leaf);
    if (m.expanded) throw AlreadyExpanded("molecule " + m.item.id());
    if (actions.size() != q0s.size()) {
      throw InvalidParams("attach_expansion needs one initial score per action");
    }
    const int child_depth = m.depth + 1;
    molecules_[leaf].expanded = true;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const NodeId rid = static_cast<NodeId>(reactions_.size());
      ReactionNode r;
      r.q_bar = q0s[i];
      r.q_history_sum = q0s[i];
      r.parent = leaf;
      auto reactants = actions[i].reactants;
      r.action = std::move(actions[i]);
      reactions_.push_back(std::move(r));
      molecules_[leaf].children.push_back(rid);
      bool all_stock = true;
      for (auto& item : reactants) {
        NodeId mid = new_molecule(std::move(item), rid, child_depth);
        reactions_[rid].children.push_back(mid);
        all_stock = all_stock && molecules_[mid].status == Status::Success;
      }
      if (all_stock) reactions_[rid].status = Status::Success;
    }
    if (molecules_[leaf].children.empty()) molecules_[leaf].status = Status::Failure;
  }

  /// Re-derives the AND/OR status of `start` and of every ancestor. Terminal
  /// statuses never change. Returns the nodes whose status changed.
  std::vector<NodeRef> propagate_status(NodeRef start) {
    std::vector<NodeRef> changed;
    NodeRef cur = start;
    while (true) {
      if (cur.kind == NodeRef::Kind::Molecule) {
        auto& m = molecules_[cur.id];
        if (!is_terminal(m.status)) {
          Status s = molecule_fixed_point(m);
          if (s != m.status) {
            m.status = s;
            changed.push_back(cur);
          }
        }
        if (m.parent == kNoNode) break;
        cur = NodeRef::reaction(m.parent);
      } else {
        auto& r = reactions_[cur.id];
        if (!is_terminal(r.status)) {
          Status s = reaction_fixed_point(r);
          if (s != r.status) {
            r.status = s;
            changed.push_back(cur);
          }
        }
        cur = NodeRef::molecule(r.parent);
      }
    }
    return changed;
  }

  /// Appends one reward-driven observation to a reaction node.
  void record_reward(NodeId rid, double q) {
    auto& r = reaction(rid);
    r.n += 1;
    r.q_history_sum += q;
    r.q_bar = r.q_history_sum / static_cast<double>(r.n + 1);
  }

  bool route_exists() const { return molecules_[0].status == Status::Success; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["root"] = 0;
    auto& ms = j["molecules"] = nlohmann::json::array();
    for (std::size_t i = 0; i < molecules_.size(); ++i) {
      const auto& m = molecules_[i];
      ms.push_back({{"id", i},
                    {"item", m.item.id()},
                    {"status", to_string(m.status)},
                    {"expanded", m.expanded},
                    {"v_m", m.v_m},
                    {"parent", m.parent == kNoNode ? nlohmann::json() : nlohmann::json(m.parent)},
                    {"children", m.children}});
    }
    auto& rs = j["reactions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < reactions_.size(); ++i) {
      const auto& r = reactions_[i];
      rs.push_back({{"id", i},
                    {"template", r.action.template_id},
                    {"p", r.action.probability},
                    {"status", to_string(r.status)},
                    {"q_bar", r.q_bar},
                    {"n", r.n},
                    {"parent", r.parent},
                    {"children", r.children}});
    }
    return j;
  }

  std::string to_dot() const {
    std::ostringstream os;
    os << "digraph search_tree {\n  node [fontname=\"monospace\"];\n";
    auto color = [](Status s) {
      return s == Status::Success ? "green" : s == Status::Failure ? "red" : "black";
    };
    for (std::size_t i = 0; i < molecules_.size(); ++i) {
      const auto& m = molecules_[i];
      os << "  m" << i << " [shape=ellipse,color=" << color(m.status) << ",label=\""
         << m.item.id() << "\\nV=" << m.v_m << "\"];\n";
    }
    for (std::size_t i = 0; i < reactions_.size(); ++i) {
      const auto& r = reactions_[i];
      os << "  r" << i << " [shape=box,color=" << color(r.status) << ",label=\""
         << r.action.template_id << "\\nQ=" << r.q_bar << " N=" << r.n << "\"];\n";
      os << "  m" << r.parent << " -> r" << i << ";\n";
      for (NodeId c : r.children) os << "  r" << i << " -> m" << c << ";\n";
    }
    os << "}\n";
    return os.str();
  }

 private:
  NodeId new_molecule(Item item, NodeId parent, int depth) {
    const NodeId id = static_cast<NodeId>(molecules_.size());
    MoleculeNode m;
    m.item = std::move(item);
    m.parent = parent;
    m.depth = depth;
    if (stock_.contains(m.item)) {
      m.status = Status::Success;
      m.expanded = true;
      m.v_m = kStockValue;
    }
    molecules_.push_back(std::move(m));
    return id;
  }

  Status molecule_fixed_point(const MoleculeNode& m) const {
    if (stock_.contains(m.item)) return Status::Success;
    bool all_failed = true;
    for (NodeId c : m.children) {
      const Status s = reactions_[c].status;
      if (s == Status::Success) return Status::Success;
      all_failed = all_failed && s == Status::Failure;
    }
    return m.expanded && all_failed ? Status::Failure : Status::Unknown;
  }

  Status reaction_fixed_point(const ReactionNode& r) const {
    bool all_success = true;
    for (NodeId c : r.children) {
      const Status s = molecules_[c].status;
      if (s == Status::Failure) return Status::Failure;
      all_success = all_success && s == Status::Success;
    }
    return all_success ? Status::Success : Status::Unknown;
  }

  StockSet stock_;
  std::vector<MoleculeNode> molecules_;
  std::vector<ReactionNode> reactions_;
  std::uint64_t iterations_ = 0;
};

inline bool route_exists(const SearchTree& tree) { return tree.route_exists(); }

}  // namespace egmcts
