#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "egmcts/brute_force.hpp"
#include "egmcts/errors.hpp"
#include "egmcts/rng.hpp"
#include "egmcts/synthetic_domain.hpp"

namespace egmcts {

struct Instance {
  Item target;
  int optimal_length = 0;
};

struct GenerationOptions {
  std::uint64_t salt = 0;
  std::size_t max_item_length = 24;
  std::size_t attempts_per_instance = 4000;
  std::set<std::string> exclude;  // ids that must not be produced again
};

/// Solvable targets whose certified optimal route length lies in
/// [min_len, max_len]. Targets are built forward from stock through the
/// constructive rules (every reactant pattern a bare variable); the
/// brute-force oracle then certifies the optimum.
inline std::vector<Instance> generate_instances(const SyntheticOracle& oracle, std::size_t n,
                                                std::pair<int, int> difficulty,
                                                const GenerationOptions& opt = {},
                                                const OracleConfig& cfg = {}) {
  const auto [min_len, max_len] = difficulty;
  if (max_len > kMaxBruteForceDepth || min_len < 0 || min_len > max_len) {
    throw InvalidParams("difficulty must satisfy 0 <= min <= max <= 8");
  }
  const auto& domain = oracle.domain();
  const StockSet stock = domain.stock_set();

  struct Constructive {
    Pattern product;
    std::vector<int> vars;
  };
  std::vector<Constructive> constructive;
  for (const auto& r : domain.rules) {
    Constructive c{Pattern::parse(r.product), {}};
    bool ok = true;
    std::set<int> used;
    for (const auto& s : r.reactants) {
      auto p = Pattern::parse(s);
      if (p.tokens.size() != 1 || p.tokens[0].var < 0 || !used.insert(p.tokens[0].var).second) {
        ok = false;
        break;
      }
      c.vars.push_back(p.tokens[0].var);
    }
    if (ok && used == c.product.variables()) constructive.push_back(std::move(c));
  }
  if (constructive.empty() || domain.stock.empty()) {
    throw GenerationExhausted("domain has no constructive rules or empty stock");
  }

  Rng rng(derive_seed(derive_seed(domain.seed, "instances"), opt.salt));
  std::vector<std::string> pool = domain.stock;
  std::set<std::string> in_pool(pool.begin(), pool.end());
  std::set<std::string> emitted = opt.exclude;
  std::vector<Instance> out;
  const std::size_t budget = opt.attempts_per_instance * std::max<std::size_t>(n, 1);

  for (std::size_t attempt = 0; attempt < budget && out.size() < n; ++attempt) {
    const auto& rule = constructive[uniform_index(rng, constructive.size())];
    Binding b{};
    std::vector<std::string> picks;
    for (std::size_t v = 0; v < rule.vars.size(); ++v) {
      picks.push_back(pool[uniform_index(rng, pool.size())]);
    }
    for (std::size_t i = 0; i < rule.vars.size(); ++i) b[rule.vars[i]] = picks[i];
    std::string product = instantiate(rule.product, b);
    if (product.size() > opt.max_item_length || in_pool.count(product)) continue;
    Item item(product, oracle.fingerprint(product));
    auto len = brute_force_solve(item, stock, oracle, kMaxBruteForceDepth, cfg);
    if (!len) continue;
    pool.push_back(product);
    in_pool.insert(product);
    if (*len >= min_len && *len <= max_len && !emitted.count(product)) {
      emitted.insert(product);
      out.push_back({std::move(item), *len});
    }
  }
  if (out.size() < n) {
    throw GenerationExhausted("produced " + std::to_string(out.size()) + " of " +
                              std::to_string(n) + " instances");
  }
  return out;
}

}  // namespace egmcts
