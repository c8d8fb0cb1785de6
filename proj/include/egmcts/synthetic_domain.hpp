#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/fingerprint.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"

namespace egmcts {

// String rewrite rules. A pattern is a sequence of literal characters and
// variables `$1`..`$9`; a variable matches a non-empty substring and must
// bind consistently where it repeats. Applications are accepted only when
// every reactant is strictly shorter than the product, so string length is
// the well-founded measure and every rule system terminates.

struct PatternToken {
  int var = -1;  // >= 0 for a variable
  char literal = 0;
};

struct Pattern {
  std::string text;
  std::vector<PatternToken> tokens;

  static Pattern parse(std::string_view text) {
    Pattern p;
    p.text = std::string(text);
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '$') {
        if (i + 1 >= text.size() || text[i + 1] < '1' || text[i + 1] > '9') {
          throw DomainError("bad variable in pattern '" + p.text + "'");
        }
        p.tokens.push_back({text[i + 1] - '1', 0});
        ++i;
      } else {
        p.tokens.push_back({-1, text[i]});
      }
    }
    if (p.tokens.empty()) throw DomainError("empty pattern");
    return p;
  }

  std::set<int> variables() const {
    std::set<int> vs;
    for (const auto& t : tokens)
      if (t.var >= 0) vs.insert(t.var);
    return vs;
  }
};

using Binding = std::array<std::string_view, 9>;

namespace detail {

inline void match_from(const Pattern& p, std::size_t ti, std::string_view s,
                       std::size_t si, Binding& b, std::vector<Binding>& out) {
  if (ti == p.tokens.size()) {
    if (si == s.size()) out.push_back(b);
    return;
  }
  const auto& tok = p.tokens[ti];
  if (tok.var < 0) {
    if (si < s.size() && s[si] == tok.literal) match_from(p, ti + 1, s, si + 1, b, out);
    return;
  }
  auto& slot = b[tok.var];
  if (!slot.empty()) {
    if (s.substr(si, slot.size()) == slot) match_from(p, ti + 1, s, si + slot.size(), b, out);
    return;
  }
  for (std::size_t len = 1; si + len <= s.size(); ++len) {
    slot = s.substr(si, len);
    match_from(p, ti + 1, s, si + len, b, out);
  }
  slot = {};
}

}  // namespace detail

/// All bindings of `p` against `s`, in left-to-right, shortest-first order.
inline std::vector<Binding> match_pattern(const Pattern& p, std::string_view s) {
  std::vector<Binding> out;
  Binding b{};
  detail::match_from(p, 0, s, 0, b, out);
  return out;
}

inline std::string instantiate(const Pattern& p, const Binding& b) {
  std::string out;
  for (const auto& t : p.tokens) {
    if (t.var >= 0)
      out += b[t.var];
    else
      out += t.literal;
  }
  return out;
}

struct Rule {
  std::string id;
  std::string product;
  std::vector<std::string> reactants;
  double weight = 1.0;
};

struct SyntheticDomain {
  static constexpr int kFormatVersion = 1;

  std::vector<Rule> rules;
  std::vector<std::string> stock;
  std::uint64_t seed = 0;

  StockSet stock_set() const { return StockSet::from_ids(stock); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "egmcts-synthetic-domain";
    j["version"] = kFormatVersion;
    j["seed"] = seed;
    auto& rs = j["rules"] = nlohmann::json::array();
    for (const auto& r : rules) {
      rs.push_back({{"id", r.id}, {"product", r.product}, {"reactants", r.reactants},
                    {"weight", r.weight}});
    }
    j["stock"] = stock;
    return j;
  }

  static SyntheticDomain from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != kFormatVersion) {
      throw DomainError("unsupported synthetic domain version");
    }
    SyntheticDomain d;
    try {
      d.seed = j.value("seed", std::uint64_t{0});
      for (const auto& r : j.at("rules")) {
        d.rules.push_back({r.at("id").get<std::string>(), r.at("product").get<std::string>(),
                           r.at("reactants").get<std::vector<std::string>>(),
                           r.value("weight", 1.0)});
      }
      d.stock = j.at("stock").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(std::string("malformed domain: ") + e.what());
    }
    return d;
  }

  static SyntheticDomain load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(path + ": " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DomainError("cannot write " + path);
    out << to_json().dump(2) << '\n';
  }
};

/// Molecule-style fingerprint of a string item: hashed 1..3-grams plus
/// length, in the spirit of a circular fingerprint.
inline Fingerprint item_fingerprint(std::string_view id) {
  std::vector<std::string> feats;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= id.size(); ++i) {
      feats.push_back("g:" + std::string(id.substr(i, n)));
    }
  }
  feats.push_back("len:" + std::to_string(id.size()));
  return hashed_fingerprint(feats, 0x6d6f6cULL);
}

inline Fingerprint rule_fingerprint(const Rule& r) {
  std::vector<std::string> feats{"id:" + r.id, "p:" + r.product};
  for (const auto& s : r.reactants) feats.push_back("r:" + s);
  for (std::size_t i = 0; i + 2 <= r.product.size(); ++i) {
    feats.push_back("pg:" + r.product.substr(i, 2));
  }
  return hashed_fingerprint(feats, 0x746d706cULL);
}

/// Expansion oracle over a synthetic rule system. Immutable after
/// construction, so concurrent const calls are safe.
class SyntheticOracle final : public ExpansionOracle {
 public:
  explicit SyntheticOracle(SyntheticDomain domain) : domain_(std::move(domain)) {
    for (const auto& r : domain_.rules) {
      if (r.id.empty()) throw DomainError("rule without id");
      if (r.reactants.empty()) throw DomainError("rule " + r.id + " has no reactants");
      if (!(r.weight > 0.0)) throw DomainError("rule " + r.id + " needs positive weight");
      Compiled c;
      c.product = Pattern::parse(r.product);
      auto pvars = c.product.variables();
      for (const auto& s : r.reactants) {
        c.reactants.push_back(Pattern::parse(s));
        for (int v : c.reactants.back().variables()) {
          if (!pvars.count(v)) {
            throw DomainError("rule " + r.id + " uses an unbound variable");
          }
        }
      }
      c.fingerprint = rule_fingerprint(r);
      compiled_.push_back(std::move(c));
    }
  }

  const SyntheticDomain& domain() const { return domain_; }

  std::vector<TemplateAction> expand(const Item& item,
                                     const OracleConfig& cfg) const override {
    struct Application {
      std::size_t rule;
      std::vector<std::string> reactants;
    };
    std::vector<Application> apps;
    std::vector<bool> matched(compiled_.size(), false);
    const std::string& id = item.id();
    for (std::size_t ri = 0; ri < compiled_.size(); ++ri) {
      std::set<std::string> seen;
      for (const auto& b : match_pattern(compiled_[ri].product, id)) {
        std::vector<std::string> rs;
        bool ok = true;
        for (const auto& rp : compiled_[ri].reactants) {
          rs.push_back(instantiate(rp, b));
          if (rs.back().size() >= id.size()) ok = false;
        }
        if (!ok) continue;
        std::vector<std::string> sorted = rs;
        std::sort(sorted.begin(), sorted.end());
        std::string key;
        for (const auto& s : sorted) key += s + '\x1f';
        if (!seen.insert(key).second) continue;
        matched[ri] = true;
        apps.push_back({ri, std::move(rs)});
      }
    }
    double total = 0.0;
    for (std::size_t ri = 0; ri < compiled_.size(); ++ri)
      if (matched[ri]) total += domain_.rules[ri].weight;

    std::vector<TemplateAction> out;
    out.reserve(apps.size());
    for (auto& a : apps) {
      TemplateAction t;
      t.template_id = domain_.rules[a.rule].id;
      t.fingerprint = compiled_[a.rule].fingerprint;
      t.probability = domain_.rules[a.rule].weight / total;
      for (auto& r : a.reactants) t.reactants.emplace_back(r, item_fingerprint(r));
      out.push_back(std::move(t));
    }
    sort_and_truncate(out, cfg.k);
    return out;
  }

  Fingerprint fingerprint(std::string_view id) const override { return item_fingerprint(id); }

 private:
  struct Compiled {
    Pattern product;
    std::vector<Pattern> reactants;
    Fingerprint fingerprint;
  };

  SyntheticDomain domain_;
  std::vector<Compiled> compiled_;
};

/// Knobs for the benchmark domain family.
///
/// Items are strings of atoms (lower case) joined by bond markers (upper
/// case). Every marker has a splitting rule. Some markers also carry a
/// high-weight decoy that leaves an unremovable `Z` on one fragment, and a
/// capping rule that is only productive when the left fragment ends in a
/// cappable atom. Priors are therefore systematically misleading, which is
/// what experience-guided scoring has to learn around.
struct DomainProfile {
  int atoms = 8;
  int markers = 6;
  int decoy_markers = 4;
  int capping_markers = 2;
  int cappable_atoms = 4;
  int compound_stock = 10;
  double good_weight_lo = 0.5, good_weight_hi = 1.5;
  double decoy_weight_lo = 2.0, decoy_weight_hi = 4.0;
  double capping_weight_lo = 1.0, capping_weight_hi = 2.0;
};

inline SyntheticDomain make_benchmark_domain(std::uint64_t seed, const DomainProfile& p = {}) {
  if (p.atoms < 1 || p.atoms > 26 || p.markers < 1 || p.markers > 24) {
    throw DomainError("profile out of range");
  }
  Rng rng(derive_seed(seed, "domain"));
  SyntheticDomain d;
  d.seed = seed;
  std::vector<std::string> atoms;
  for (int i = 0; i < p.atoms; ++i) atoms.emplace_back(1, static_cast<char>('a' + i));
  std::vector<char> markers;
  // Y and Z are reserved for capping and decoy residues.
  for (int i = 0; i < p.markers; ++i) markers.push_back(static_cast<char>('A' + i));

  std::set<std::string> stock(atoms.begin(), atoms.end());
  for (int i = 0; i < std::min(p.cappable_atoms, p.atoms); ++i) stock.insert(atoms[i] + "Y");

  for (int mi = 0; mi < p.markers; ++mi) {
    const std::string m(1, markers[mi]);
    d.rules.push_back({"split_" + m, "$1" + m + "$2", {"$1", "$2"},
                       uniform(rng, p.good_weight_lo, p.good_weight_hi)});
    if (mi < p.decoy_markers) {
      d.rules.push_back({"decoy_" + m, "$1" + m + "$2", {"$1", "$2Z"},
                         uniform(rng, p.decoy_weight_lo, p.decoy_weight_hi)});
    }
    if (mi >= p.markers - p.capping_markers) {
      d.rules.push_back({"cap_" + m, "$1" + m + "$2", {"$1Y", "$2"},
                         uniform(rng, p.capping_weight_lo, p.capping_weight_hi)});
    }
  }
  int guard = 0;
  while (static_cast<int>(stock.size()) <
             p.atoms + std::min(p.cappable_atoms, p.atoms) + p.compound_stock &&
         guard++ < 10000) {
    std::string s = atoms[uniform_index(rng, atoms.size())] +
                    std::string(1, markers[uniform_index(rng, markers.size())]) +
                    atoms[uniform_index(rng, atoms.size())];
    stock.insert(s);
  }
  d.stock.assign(stock.begin(), stock.end());
  return d;
}

}  // namespace egmcts
