#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "egmcts/errors.hpp"
#include "egmcts/fingerprint.hpp"

namespace egmcts {

/// A decomposable unit. Identity is the canonical id; the fingerprint is
/// carried data only.
class Item {
 public:
  Item() = default;
  Item(std::string id, Fingerprint fp) : id_(std::move(id)), fp_(fp) {
    if (id_.empty()) throw InvalidItem("empty id");
  }

  const std::string& id() const { return id_; }
  const Fingerprint& fingerprint() const { return fp_; }

  friend bool operator==(const Item& a, const Item& b) { return a.id_ == b.id_; }
  friend auto operator<=>(const Item& a, const Item& b) { return a.id_ <=> b.id_; }

 private:
  std::string id_;
  Fingerprint fp_;
};

/// One concrete decomposition of a product by one template.
struct TemplateAction {
  std::string template_id;
  Fingerprint fingerprint;
  double probability = 0.0;
  std::vector<Item> reactants;
};

/// Canonical key of a reactant multiset: sorted ids joined by '.'.
inline std::string reactant_key(std::span<const Item> reactants) {
  std::vector<std::string_view> ids;
  ids.reserve(reactants.size());
  for (const auto& r : reactants) ids.push_back(r.id());
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) key += '.';
    key += ids[i];
  }
  return key;
}

inline void validate_action(const TemplateAction& a, std::string_view product_id) {
  if (!(a.probability >= 0.0 && a.probability <= 1.0)) {
    throw InvalidAction("probability outside [0,1] for template " + a.template_id);
  }
  if (a.reactants.empty()) {
    throw InvalidAction("template " + a.template_id + " has no reactants");
  }
  for (const auto& r : a.reactants) {
    if (r.id() == product_id) {
      throw InvalidAction("template " + a.template_id + " regenerates its product");
    }
  }
}

/// The set of primitive items. Either an explicit id set or a delegated
/// membership query (for example a remote service).
class StockSet {
 public:
  StockSet() : ids_(std::make_shared<std::unordered_set<std::string>>()) {}

  template <class Range>
  static StockSet from_ids(const Range& ids) {
    StockSet s;
    auto set = std::make_shared<std::unordered_set<std::string>>();
    for (const auto& id : ids) set->emplace(id);
    s.ids_ = std::move(set);
    return s;
  }

  static StockSet from_query(std::function<bool(std::string_view)> query) {
    StockSet s;
    s.ids_.reset();
    s.query_ = std::move(query);
    return s;
  }

  bool contains(std::string_view id) const {
    if (ids_) return ids_->find(std::string(id)) != ids_->end();
    return query_(id);
  }

  bool contains(const Item& item) const { return contains(item.id()); }

  /// Sorted members; empty for query-backed sets.
  std::vector<std::string> members() const {
    std::vector<std::string> out;
    if (ids_) out.assign(ids_->begin(), ids_->end());
    std::sort(out.begin(), out.end());
    return out;
  }

  bool enumerable() const { return static_cast<bool>(ids_); }

 private:
  std::shared_ptr<const std::unordered_set<std::string>> ids_;
  std::function<bool(std::string_view)> query_;
};

struct OracleConfig {
  // Top-k cap. 50 follows the single-step models this engine is usually
  // paired with; not confirmed for every setup.
  int k = 50;
};

/// The single-step expansion model. Implementations must be safe for
/// concurrent const calls.
class ExpansionOracle {
 public:
  virtual ~ExpansionOracle() = default;

  /// At most cfg.k actions, probability non-increasing. Empty means no
  /// applicable template; transport failures throw OracleUnavailable.
  virtual std::vector<TemplateAction> expand(const Item& item,
                                             const OracleConfig& cfg) const = 0;

  virtual Fingerprint fingerprint(std::string_view id) const = 0;

  Item make_item(std::string_view id) const {
    return Item(std::string(id), fingerprint(id));
  }
};

/// Stable sort by probability descending, then truncate to k.
inline void sort_and_truncate(std::vector<TemplateAction>& actions, int k) {
  std::stable_sort(actions.begin(), actions.end(),
                   [](const TemplateAction& a, const TemplateAction& b) {
                     return a.probability > b.probability;
                   });
  if (k >= 0 && actions.size() > static_cast<std::size_t>(k)) actions.resize(k);
}

inline constexpr std::size_t kEgnInputSize = 2 * kFingerprintBits;

/// Molecule bits first, then template bits, each mapped to 0.0 / 1.0.
inline std::vector<double> make_egn_input(const Fingerprint& mol, const Fingerprint& tmpl) {
  std::vector<double> x(kEgnInputSize, 0.0);
  for (std::size_t i = 0; i < kFingerprintBits; ++i) {
    if (mol[i]) x[i] = 1.0;
    if (tmpl[i]) x[kFingerprintBits + i] = 1.0;
  }
  return x;
}

/// Same as above for raw bit arrays of unchecked length.
inline std::vector<double> make_egn_input(std::span<const std::uint8_t> mol_bits,
                                          std::span<const std::uint8_t> tmpl_bits) {
  return make_egn_input(from_bit_values(mol_bits), from_bit_values(tmpl_bits));
}

}  // namespace egmcts
