#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"

namespace egmcts {

inline constexpr int kMaxBruteForceDepth = 8;

/// Minimal number of reactions that reduce `target` to stock, over all
/// decompositions of AND-OR depth at most `depth_cap`. Exhaustive, with
/// memoization on (item id, remaining depth). Absent if unsolvable within
/// the cap.
inline std::optional<int> brute_force_solve(const Item& target, const StockSet& stock,
                                            const ExpansionOracle& oracle, int depth_cap,
                                            const OracleConfig& cfg = {}) {
  if (depth_cap < 0 || depth_cap > kMaxBruteForceDepth) {
    throw InvalidParams("brute force depth cap must be in [0, 8]");
  }
  std::map<std::pair<std::string, int>, std::optional<int>> memo;
  std::map<std::string, std::vector<TemplateAction>> expansions;

  auto solve = [&](auto&& self, const Item& item, int depth) -> std::optional<int> {
    if (stock.contains(item)) return 0;
    if (depth == 0) return std::nullopt;
    auto key = std::make_pair(item.id(), depth);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    auto eit = expansions.find(item.id());
    if (eit == expansions.end()) {
      eit = expansions.emplace(item.id(), oracle.expand(item, cfg)).first;
    }
    std::optional<int> best;
    for (const auto& action : eit->second) {
      int total = 1;
      bool ok = true;
      for (const auto& r : action.reactants) {
        auto c = self(self, r, depth - 1);
        if (!c) {
          ok = false;
          break;
        }
        total += *c;
        if (best && total >= *best) break;
      }
      if (ok && (!best || total < *best)) best = total;
    }
    memo[key] = best;
    return best;
  };
  return solve(solve, target, depth_cap);
}

}  // namespace egmcts
