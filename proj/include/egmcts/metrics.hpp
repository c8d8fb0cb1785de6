#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egmcts/errors.hpp"
#include "egmcts/fingerprint.hpp"

namespace egmcts {

/// One planner on one target.
struct BenchmarkRow {
  std::string algorithm;
  std::string target;
  bool solved = false;
  std::uint64_t iterations = 0;  // to the first solution when solved
  std::uint64_t expanded_reactions = 0;
  std::uint64_t expanded_molecules = 0;
  std::optional<int> route_length;
};

struct AlgorithmSummary {
  std::string algorithm;
  std::vector<std::pair<int, double>> success_rate;  // (limit, fraction)
  double avg_iterations = 0.0;
  double avg_reactions = 0.0;
  double avg_molecules = 0.0;
  int longest_route_count = 0;   // LRN
  int shortest_route_count = 0;  // SRN
  double avg_length = 0.0;       // over the commonly solved targets
  std::size_t targets = 0;
  std::size_t common_solved = 0;
};

struct AggregateOptions {
  std::vector<int> limits{100, 200, 300, 400, 500};
  int iteration_limit = 500;
};

/// Per-algorithm efficiency and route-quality summary. Unsolved targets
/// count as `iteration_limit` iterations. LRN/SRN and average length are
/// taken over targets solved by every algorithm; ties count for everyone
/// tied.
inline std::vector<AlgorithmSummary> aggregate(std::span<const BenchmarkRow> rows,
                                               const AggregateOptions& opt = {}) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, const BenchmarkRow*>> by_algo;
  for (const auto& r : rows) {
    if (!by_algo.count(r.algorithm)) order.push_back(r.algorithm);
    auto& slot = by_algo[r.algorithm][r.target];
    if (slot) throw MismatchedTargets("duplicate row for " + r.algorithm + "/" + r.target);
    if (r.solved != r.route_length.has_value()) {
      throw MismatchedTargets("route length must be present iff solved: " + r.target);
    }
    slot = &r;
  }
  if (order.empty()) return {};
  std::set<std::string> targets;
  for (const auto& [t, _] : by_algo.begin()->second) targets.insert(t);
  for (const auto& [algo, m] : by_algo) {
    std::set<std::string> ts;
    for (const auto& [t, _] : m) ts.insert(t);
    if (ts != targets) throw MismatchedTargets("algorithm " + algo + " covers a different target set");
  }

  std::vector<std::string> common;
  for (const auto& t : targets) {
    bool all = true;
    for (const auto& [algo, m] : by_algo) all = all && m.at(t)->solved;
    if (all) common.push_back(t);
  }

  std::vector<AlgorithmSummary> out;
  for (const auto& algo : order) {
    const auto& m = by_algo.at(algo);
    AlgorithmSummary s;
    s.algorithm = algo;
    s.targets = targets.size();
    s.common_solved = common.size();
    const double n = static_cast<double>(targets.size());
    for (int limit : opt.limits) {
      std::size_t ok = 0;
      for (const auto& [t, r] : m)
        if (r->solved && r->iterations <= static_cast<std::uint64_t>(limit)) ++ok;
      s.success_rate.emplace_back(limit, static_cast<double>(ok) / n);
    }
    double it = 0, rx = 0, mo = 0;
    for (const auto& [t, r] : m) {
      it += r->solved ? static_cast<double>(r->iterations) : opt.iteration_limit;
      rx += static_cast<double>(r->expanded_reactions);
      mo += static_cast<double>(r->expanded_molecules);
    }
    s.avg_iterations = it / n;
    s.avg_reactions = rx / n;
    s.avg_molecules = mo / n;
    double len = 0;
    for (const auto& t : common) {
      int mine = *m.at(t)->route_length;
      int lo = mine, hi = mine;
      for (const auto& [other, om] : by_algo) {
        lo = std::min(lo, *om.at(t)->route_length);
        hi = std::max(hi, *om.at(t)->route_length);
      }
      if (mine == hi) ++s.longest_route_count;
      if (mine == lo) ++s.shortest_route_count;
      len += mine;
    }
    s.avg_length = common.empty() ? 0.0 : len / static_cast<double>(common.size());
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {
inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace detail

/// Success rate per limit, Avg iter, Avg T, Avg M. Rates in percent.
inline std::string efficiency_csv(std::span<const AlgorithmSummary> summary) {
  std::string out = "algorithm";
  if (!summary.empty())
    for (const auto& [limit, _] : summary.front().success_rate) out += ",success_" + std::to_string(limit);
  out += ",avg_iter,avg_T,avg_M\n";
  for (const auto& s : summary) {
    out += s.algorithm;
    for (const auto& [_, rate] : s.success_rate) out += "," + detail::fixed(100.0 * rate, 2);
    out += "," + detail::fixed(s.avg_iterations, 2) + "," + detail::fixed(s.avg_reactions, 2) + "," +
           detail::fixed(s.avg_molecules, 2) + "\n";
  }
  return out;
}

/// LRN, SRN and average route length over the commonly solved targets.
inline std::string quality_csv(std::span<const AlgorithmSummary> summary) {
  std::string out = "algorithm,LRN,SRN,avg_length,common_solved\n";
  for (const auto& s : summary) {
    out += s.algorithm + "," + std::to_string(s.longest_route_count) + "," +
           std::to_string(s.shortest_route_count) + "," + detail::fixed(s.avg_length, 2) + "," +
           std::to_string(s.common_solved) + "\n";
  }
  return out;
}

struct SimilarityStats {
  double s_max = 0.0;
  double s_avg = 0.0;
};

/// Per test item, the highest and the mean Tanimoto similarity to the
/// training set.
inline std::vector<SimilarityStats> similarity_stats(std::span<const Fingerprint> test,
                                                     std::span<const Fingerprint> train) {
  if (test.empty() || train.empty()) throw EmptySet("similarity needs non-empty sets");
  std::vector<SimilarityStats> out;
  out.reserve(test.size());
  for (const auto& t : test) {
    SimilarityStats s;
    double sum = 0.0;
    for (const auto& r : train) {
      const double sim = tanimoto(t, r);
      s.s_max = std::max(s.s_max, sim);
      sum += sim;
    }
    s.s_avg = sum / static_cast<double>(train.size());
    out.push_back(s);
  }
  return out;
}

}  // namespace egmcts
