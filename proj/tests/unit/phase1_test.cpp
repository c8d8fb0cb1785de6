#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "egmcts/instances.hpp"
#include "egmcts/phase1.hpp"
#include "test_support.hpp"

using namespace egmcts;
using namespace egmcts::testing;

namespace {

RawExperience raw(const std::string& item_id, const std::string& tmpl, double q) {
  return {{item_id, tmpl, "r"}, fp_of(item_id), fp_of(tmpl), q};
}

ValidationRecord rec(double rs, double ra) { return {0, rs, ra}; }

struct Suite {
  SyntheticOracle oracle{make_benchmark_domain(17)};
  std::vector<Item> train, valid;
  Suite() {
    auto inst = generate_instances(oracle, 12, {2, 4});
    for (std::size_t i = 0; i < inst.size(); ++i) (i < 8 ? train : valid).push_back(inst[i].target);
  }
  StockSet stock() const { return oracle.domain().stock_set(); }
};

Phase1Params quick_params(int rounds) {
  Phase1Params p;
  p.max_rounds = rounds;
  p.search.iteration_limit = 40;
  return p;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs = 2;
  return t;
}

}  // namespace

TEST(CollectExperience, StockTargetHasNone) {
  SearchTree t(item("s"), stock_of({"s"}));
  EXPECT_TRUE(collect_experience(t).empty());
}

TEST(CollectExperience, OneEntryPerReactionNode) {
  SearchTree t(item("root"), stock_of({"s"}));
  const double q0[] = {0.1, 0.2, 0.3};
  t.attach_expansion(t.root(),
                     {action("a", 0.4, {"x"}), action("b", 0.3, {"y", "s"}), action("c", 0.3, {"s"})},
                     q0);
  t.record_reward(1, 0.8);
  auto got = collect_experience(t);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].q_bar, 0.1);
  EXPECT_DOUBLE_EQ(got[1].q_bar, 0.5);
  EXPECT_EQ(got[2].q_bar, 0.3);
  EXPECT_EQ(got[1].key.item, "root");
  EXPECT_EQ(got[1].key.template_id, "b");
  const std::vector<Item> ys{item("y"), item("s")};
  EXPECT_EQ(got[1].key.reactants, reactant_key(ys));
  EXPECT_EQ(got[1].mol, fp_of("root"));
}

TEST(CollectExperience, RepeatedPairInTwoBranchesMergesToMean) {
  SearchTree t(item("root"), stock_of({"s"}));
  const double q0[] = {0.5, 0.5};
  t.attach_expansion(t.root(), {action("a", 0.5, {"m"}), action("b", 0.5, {"m", "s"})}, q0);
  const double qa[] = {0.4}, qb[] = {0.6};
  t.attach_expansion(t.reaction(0).children[0], {action("t", 1.0, {"s"})}, qa);
  t.attach_expansion(t.reaction(1).children[0], {action("t", 1.0, {"s"})}, qb);
  auto got = collect_experience(t);
  ASSERT_EQ(got.size(), 4u);
  EXPECT_EQ(got[2].key, got[3].key);
  auto set = merge_experience(got, {});
  EXPECT_EQ(set.size(), 3u);
  const auto& e = set.entries.at(got[2].key);
  EXPECT_EQ(e.occurrences(), 2u);
  EXPECT_DOUBLE_EQ(e.mean(), 0.5);
}

TEST(MergeExperience, Examples) {
  std::vector<RawExperience> three{raw("m", "t", 0.2), raw("m", "t", 0.4), raw("m", "t", 0.9)};
  auto set = merge_experience(three, {});
  ASSERT_EQ(set.size(), 1u);
  EXPECT_DOUBLE_EQ(set.entries.begin()->second.mean(), 0.5);
  EXPECT_EQ(set.entries.begin()->second.occurrences(), 3u);

  auto same = merge_experience(std::vector<RawExperience>{}, set);
  EXPECT_EQ(same.size(), 1u);
  EXPECT_EQ(same.entries.begin()->second.observations, set.entries.begin()->second.observations);

  auto more = merge_experience(std::vector<RawExperience>{raw("m", "t", 0.5), raw("n", "t", 0.1)}, set);
  EXPECT_EQ(more.size(), 2u);
  EXPECT_DOUBLE_EQ(more.entries.at({"m", "t", "r"}).mean(), 0.5);
}

TEST(MergeExperience, OrderDoesNotMatter) {
  Rng rng(4);
  std::vector<RawExperience> obs;
  for (int i = 0; i < 60; ++i) {
    obs.push_back(raw("m" + std::to_string(i % 7), "t" + std::to_string(i % 3), uniform(rng, -10, 10)));
  }
  auto ref = merge_experience(obs, {});
  for (int t = 0; t < 20; ++t) {
    shuffle(obs, rng);
    // Split the stream across two merges as well.
    const std::size_t cut = uniform_index(rng, obs.size());
    auto a = merge_experience(std::span<const RawExperience>(obs).first(cut), {});
    auto b = merge_experience(std::span<const RawExperience>(obs).subspan(cut), std::move(a));
    ASSERT_EQ(b.size(), ref.size());
    for (const auto& [k, e] : ref.entries) {
      EXPECT_EQ(b.entries.at(k).observations, e.observations);
      EXPECT_EQ(b.entries.at(k).mean(), e.mean());
    }
  }
}

TEST(TrainingSamples, TargetsClampedToUnitInterval) {
  auto set = merge_experience(
      std::vector<RawExperience>{raw("a", "t", 10.0), raw("b", "t", -10.0), raw("c", "t", 0.3)}, {});
  auto s = training_samples(set);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].target, 1.0);
  EXPECT_EQ(s[1].target, 0.0);
  EXPECT_EQ(s[2].target, 0.3);
  auto expect = to_sparse(fp_of("a"), fp_of("t"), 1.0);
  EXPECT_EQ(s[0].active, expect.active);
  EXPECT_THROW(train(EgnWeights::zeros(), ExperienceSet{}, TrainConfig{}), EmptyDataset);
}

TEST(ExperienceSetTest, WritesOneLinePerKey) {
  auto set = merge_experience(
      std::vector<RawExperience>{raw("b", "t", 0.2), raw("a", "t", 0.4), raw("a", "t", 0.6)}, {});
  auto path = (std::filesystem::temp_directory_path() / "exp_test.ndjson").string();
  set.write(path);
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["item"], "a");
  EXPECT_EQ(rows[0]["count"], 2);
  EXPECT_DOUBLE_EQ(rows[0]["mean"].get<double>(), 0.5);
  std::filesystem::remove(path);
}

TEST(ShouldContinue, SuccessRateGainAboveEpsilon) {
  std::vector<ValidationRecord> h{rec(0.75, 120), rec(0.80, 110)};
  EXPECT_TRUE(should_continue(h, rec(0.82, 110), Phase1Params{}));
}

TEST(ShouldContinue, IterationGainAtOrBelowEpsilonStops) {
  std::vector<ValidationRecord> h{rec(0.80, 100), rec(0.70, 130)};
  EXPECT_FALSE(should_continue(h, rec(0.80, 98), Phase1Params{}));
}

TEST(ShouldContinue, WorseOnBothStops) {
  std::vector<ValidationRecord> h{rec(0.80, 100)};
  EXPECT_FALSE(should_continue(h, rec(0.70, 120), Phase1Params{}));
}

TEST(ShouldContinue, FirstRoundAlwaysContinues) {
  EXPECT_TRUE(should_continue({}, rec(0.0, 500), Phase1Params{}));
}

TEST(ShouldContinue, IterationGainAboveEpsilonContinues) {
  std::vector<ValidationRecord> h{rec(0.80, 100)};
  EXPECT_TRUE(should_continue(h, rec(0.80, 96.9), Phase1Params{}));
}

TEST(Summarize, UnsolvedCountAtLimit) {
  std::vector<PlanOutcome> outs;
  outs.emplace_back(SearchTree(item("a"), stock_of({})));
  outs.back().solved = true;
  outs.back().iterations_to_first_solution = 10;
  outs.emplace_back(SearchTree(item("b"), stock_of({})));
  auto r = summarize(outs, 3, 500);
  EXPECT_EQ(r.round, 3);
  EXPECT_EQ(r.success_rate, 0.5);
  EXPECT_EQ(r.avg_iterations, 255.0);
}

TEST(RunPhase1, SingleRoundReturnsItsWeights) {
  Suite s;
  int calls = 0;
  Phase1Hooks hooks;
  EgnWeights seen;
  hooks.on_round = [&](const RoundArtifacts& a) {
    ++calls;
    seen = a.weights;
    EXPECT_EQ(a.round, 1);
    EXPECT_GT(a.experience.size(), 0u);
  };
  auto r = run_phase1(s.train, s.valid, s.stock(), s.oracle, quick_params(1), quick_train(), 3, hooks);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.best_round, 1);
  EXPECT_EQ(r.best, seen);
  EXPECT_EQ(r.best.version, 1u);
  EXPECT_EQ(r.best.round, 1u);
}

TEST(RunPhase1, FlatValidatorStopsAtRoundTwo) {
  Suite s;
  Phase1Hooks hooks;
  hooks.validator = [](int, const EgnWeights&) { return rec(0.5, 200); };
  auto r = run_phase1(s.train, s.valid, s.stock(), s.oracle, quick_params(10), quick_train(), 3, hooks);
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.best_round, 1);
}

TEST(RunPhase1, ImprovingValidatorRunsToTheBound) {
  Suite s;
  Phase1Hooks hooks;
  hooks.validator = [](int round, const EgnWeights&) { return rec(0.1 * round, 200); };
  auto r = run_phase1(s.train, s.valid, s.stock(), s.oracle, quick_params(4), quick_train(), 3, hooks);
  EXPECT_EQ(r.records.size(), 4u);
  EXPECT_EQ(r.best_round, 4);
  EXPECT_EQ(r.best.version, 4u);
}

TEST(RunPhase1, BestPrefersFewerIterationsOnTies) {
  Suite s;
  Phase1Hooks hooks;
  const double ra[] = {300, 200, 100, 250};
  hooks.validator = [&](int round, const EgnWeights&) { return rec(0.5, ra[round - 1]); };
  auto r = run_phase1(s.train, s.valid, s.stock(), s.oracle, quick_params(4), quick_train(), 3, hooks);
  EXPECT_EQ(r.records.size(), 4u);
  EXPECT_EQ(r.best_round, 3);
}

TEST(RunPhase1, RejectsOverlappingOrEmptySets) {
  Suite s;
  std::vector<Item> overlap{s.train[0]};
  EXPECT_THROW(run_phase1(s.train, overlap, s.stock(), s.oracle, quick_params(1), quick_train(), 1),
               InvalidParams);
  EXPECT_THROW(run_phase1({}, s.valid, s.stock(), s.oracle, quick_params(1), quick_train(), 1),
               InvalidParams);
}

TEST(RunPhase1, ReplayDeterministicInBothModes) {
  Suite s;
  for (bool acc : {false, true}) {
    auto p = quick_params(2);
    p.accumulate = acc;
    Phase1Hooks hooks;
    hooks.validator = [](int round, const EgnWeights&) { return rec(0.1 * round, 100); };
    auto a = run_phase1(s.train, s.valid, s.stock(), s.oracle, p, quick_train(), 9, hooks);
    auto b = run_phase1(s.train, s.valid, s.stock(), s.oracle, p, quick_train(), 9, hooks);
    EXPECT_EQ(weights_io::serialize(a.best), weights_io::serialize(b.best));
  }
}

TEST(RunPhase1, AccumulateKeepsEarlierExperience) {
  Suite s;
  for (bool acc : {false, true}) {
    auto p = quick_params(2);
    p.accumulate = acc;
    std::vector<ExperienceSet> seen;
    Phase1Hooks hooks;
    hooks.validator = [](int round, const EgnWeights&) { return rec(0.1 * round, 100); };
    hooks.on_round = [&](const RoundArtifacts& a) { seen.push_back(a.experience); };
    run_phase1(s.train, s.valid, s.stock(), s.oracle, p, quick_train(), 9, hooks);
    ASSERT_EQ(seen.size(), 2u);
    std::size_t round1_obs = 0, round2_obs = 0;
    for (const auto& [k, e] : seen[0].entries) round1_obs += e.occurrences();
    for (const auto& [k, e] : seen[1].entries) round2_obs += e.occurrences();
    if (acc) {
      for (const auto& [k, e] : seen[0].entries) EXPECT_TRUE(seen[1].entries.count(k));
      EXPECT_GT(round2_obs, round1_obs);
    } else {
      EXPECT_LE(round2_obs, 8u * 40u * 5u);
    }
  }
}

TEST(RunPhase1, ValidationDoesNotTouchWeights) {
  Suite s;
  std::vector<EgnWeights> after_train;
  std::vector<EgnWeights> after_round;
  Phase1Hooks hooks;
  auto p = quick_params(2);
  hooks.on_round = [&](const RoundArtifacts& a) { after_round.push_back(a.weights); };
  auto r = run_phase1(s.train, s.valid, s.stock(), s.oracle, p, quick_train(), 5, hooks);
  ASSERT_FALSE(after_round.empty());
  for (std::size_t i = 0; i < after_round.size(); ++i) {
    EXPECT_EQ(after_round[i].version, i + 1);
  }
  // Replanning validation with the returned weights reproduces the record.
  auto val = plan_all(s.valid, s.stock(), s.oracle, EgnScorer(r.best), p.search, 5,
                      "validate/" + std::to_string(r.best_round), 1);
  auto again = summarize(val, r.best_round, p.search.iteration_limit);
  EXPECT_EQ(again.success_rate, r.records[r.best_round - 1].success_rate);
  EXPECT_EQ(again.avg_iterations, r.records[r.best_round - 1].avg_iterations);
}

TEST(Phase1ParamsTest, Validation) {
  Phase1Params p;
  EXPECT_NO_THROW(p.validate());
  p.epsilon1 = 0;
  EXPECT_THROW(p.validate(), InvalidParams);
  p = {};
  p.window = 0;
  EXPECT_THROW(p.validate(), InvalidParams);
  p = {};
  p.max_rounds = 0;
  EXPECT_THROW(p.validate(), InvalidParams);
}
