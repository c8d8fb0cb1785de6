#include <gtest/gtest.h>

#include <sstream>

#include "egmcts/instances.hpp"
#include "egmcts/noc.hpp"
#include "test_support.hpp"

using namespace egmcts;
using namespace egmcts::testing;

namespace {

std::vector<std::string> ids(std::initializer_list<const char*> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(BuildNoc, EmptyRecordsGiveStockOnly) {
  auto stock = ids({"a", "b"});
  auto g = build_noc({}, stock);
  EXPECT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.edge_count(), 0u);
  EXPECT_TRUE(g.nodes.at("a").is_stock);
}

TEST(BuildNoc, SingleReaction) {
  std::vector<ReactionRecord> recs{{{"a", "b"}, {"c"}}};
  auto g = build_noc(recs, ids({"a", "b"}));
  ASSERT_TRUE(g.contains("c"));
  EXPECT_EQ(g.nodes.at("c").parents, (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(g.nodes.at("a").children, (std::set<std::string>{"c"}));
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(node_cost(g, "c"), 1);
  EXPECT_EQ(node_cost(g, "a"), 0);
  EXPECT_EQ(node_outdegree(g, "a"), 1u);
}

TEST(BuildNoc, ChainNeedsSeveralPassesAndIgnoresOrder) {
  std::vector<ReactionRecord> recs{{{"d"}, {"e"}}, {{"c"}, {"d"}}, {{"b"}, {"c"}}, {{"a"}, {"b"}}};
  auto g = build_noc(recs, ids({"a"}));
  EXPECT_EQ(g.nodes.at("e").level, 4);
  EXPECT_EQ(node_cost(g, "e"), 4);
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(build_noc(recs, ids({"a"})), g);
}

TEST(BuildNoc, MultiProductAndUnreachableRecords) {
  std::vector<ReactionRecord> recs{{{"a"}, {"x", "y"}}, {{"zz"}, {"w"}}};
  auto g = build_noc(recs, ids({"a"}));
  EXPECT_TRUE(g.contains("x"));
  EXPECT_TRUE(g.contains("y"));
  EXPECT_FALSE(g.contains("w"));
  EXPECT_FALSE(g.contains("zz"));
}

TEST(BuildNoc, ShuffledFixtureGivesIdenticalGraph) {
  auto recs = noc_fixture(3);
  auto stock = noc_fixture_stock();
  auto ref = build_noc(recs, stock);
  EXPECT_GT(ref.nodes.size(), 30u);
  int deepest = 0;
  for (const auto& [id, n] : ref.nodes) deepest = std::max(deepest, n.level);
  EXPECT_GE(deepest, 3);
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    shuffle(recs, rng);
    ASSERT_EQ(build_noc(recs, stock), ref);
  }
}

TEST(BuildNoc, GraphIsAcyclicAndCostsAreBellman) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto g = build_noc(noc_fixture(seed), noc_fixture_stock());
    for (const auto& [id, n] : g.nodes) {
      for (const auto& p : n.parents) EXPECT_LT(g.nodes.at(p).level, n.level);
      if (n.is_stock) {
        EXPECT_EQ(n.cost, 0);
        continue;
      }
      int best = -1;
      for (const auto& p : n.parents) best = std::max(best, g.nodes.at(p).cost);
      EXPECT_EQ(n.cost, best + 1);
      EXPECT_EQ(n.cost, longest_path_by_enumeration(g, id));
    }
  }
}

TEST(NodeCost, DiamondsMatchEnumeration) {
  auto g = build_noc(diamond_fixture(), ids({"s"}));
  EXPECT_EQ(node_cost(g, "d"), 3);
  EXPECT_EQ(node_cost(g, "f1"), 4);
  EXPECT_EQ(node_cost(g, "g"), 7);
  for (const auto& [id, n] : g.nodes) EXPECT_EQ(n.cost, longest_path_by_enumeration(g, id)) << id;
  EXPECT_THROW(node_cost(g, "nope"), UnknownNode);
  EXPECT_THROW(node_outdegree(g, "nope"), UnknownNode);
}

TEST(FilterTargets, Thresholds) {
  auto f = planted_filter_fixture();
  auto g = build_noc(f.records, f.stock);
  EXPECT_EQ(filter_targets(g, 2, 4), f.planted);
  auto all = filter_targets(g, 0, 0);
  EXPECT_EQ(all.size(), g.nodes.size() - f.stock.size());
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
  EXPECT_TRUE(filter_targets(g, 100, 100).empty());
}

TEST(HardnessScreen, KeepsOnlyUnsolved) {
  TableOracle o;
  o.add("easy", "r", 1.0, {"s"});
  o.add("stuck", "r", 1.0, {"nowhere"});
  auto stock = stock_of({"s"});
  auto cands = ids({"s", "easy", "stuck", "void"});
  auto r = hardness_screen(cands, stock, o, 100);
  EXPECT_EQ(r.hard, ids({"stuck", "void"}));
  EXPECT_TRUE(r.errors.empty());
}

TEST(HardnessScreen, RecordsOracleErrorsPerCandidate) {
  struct Picky final : ExpansionOracle {
    std::vector<TemplateAction> expand(const Item& m, const OracleConfig&) const override {
      if (m.id() == "bad") throw OracleRequestFailed("unparseable");
      if (m.id() == "gone") throw OracleUnavailable("down");
      return {};
    }
    Fingerprint fingerprint(std::string_view id) const override { return fp_of(std::string(id)); }
  } o;
  auto cands = ids({"bad", "fine", "gone"});
  auto r = hardness_screen(cands, stock_of({"s"}), o);
  EXPECT_EQ(r.hard, ids({"fine"}));
  EXPECT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors.count("bad"), 1u);
  EXPECT_EQ(r.errors.count("gone"), 1u);
}

TEST(HardnessScreen, StableOnSyntheticPool) {
  SyntheticOracle o(make_benchmark_domain(31));
  auto inst = generate_instances(o, 15, {3, 7});
  std::vector<std::string> cands;
  for (const auto& i : inst) cands.push_back(i.target.id());
  auto a = hardness_screen(cands, o.domain().stock_set(), o, 20);
  auto b = hardness_screen(cands, o.domain().stock_set(), o, 20);
  EXPECT_EQ(a.hard, b.hard);
}

TEST(NocIo, ReadRecords) {
  std::istringstream in(
      "{\"reactants\":[\"a\",\"b\"],\"products\":[\"c\"]}\n\n"
      "{\"reactants\":[\"c\"],\"products\":[\"d\",\"e\"]}\n");
  auto recs = read_reaction_records(in);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].products, ids({"d", "e"}));
  std::istringstream bad("{\"reactants\":[\"a\"]}\n");
  EXPECT_THROW(read_reaction_records(bad), ConfigError);
  std::istringstream empty_side("{\"reactants\":[],\"products\":[\"x\"]}\n");
  EXPECT_THROW(read_reaction_records(empty_side), InvalidParams);
  std::istringstream junk("not json\n");
  EXPECT_THROW(read_reaction_records(junk), ConfigError);
}

TEST(NocIo, CsvExports) {
  std::vector<ReactionRecord> recs{{{"a", "b"}, {"c"}}};
  auto g = build_noc(recs, ids({"a", "b"}));
  EXPECT_EQ(nodes_csv(g), "id,is_stock,outdegree,cost\na,1,1,0\nb,1,1,0\nc,0,0,1\n");
  EXPECT_EQ(edges_csv(g), "source,target\na,c\nb,c\n");
}

TEST(NocIo, SplitManifest) {
  std::vector<std::string> pool;
  for (int i = 0; i < 40; ++i) pool.push_back("m" + std::to_string(i));
  auto a = split_manifest(pool, {20, 5, 10}, 7);
  EXPECT_EQ(a["train"].size(), 20u);
  EXPECT_EQ(a["validation"].size(), 5u);
  EXPECT_EQ(a["test"].size(), 10u);
  std::set<std::string> seen;
  for (const char* part : {"train", "validation", "test"})
    for (const auto& id : a[part]) EXPECT_TRUE(seen.insert(id.get<std::string>()).second);
  auto shuffled = pool;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(split_manifest(shuffled, {20, 5, 10}, 7), a);
  EXPECT_NE(split_manifest(pool, {20, 5, 10}, 8), a);
  auto over = split_manifest(pool, {30, 30, 30}, 7);
  EXPECT_EQ(over["train"].size(), 30u);
  EXPECT_EQ(over["validation"].size(), 10u);
  EXPECT_EQ(over["test"].size(), 0u);
  SplitSizes def;
  EXPECT_EQ(def.train, 1193u);
  EXPECT_EQ(def.validation, 165u);
  EXPECT_EQ(def.test, 180u);
}
