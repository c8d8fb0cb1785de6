#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "egmcts/egn.hpp"
#include "egmcts/rng.hpp"

using namespace egmcts;

namespace {

// Straightforward dense evaluation written against the accessor layout.
double reference_forward(const EgnWeights& w, const std::vector<double>& x) {
  constexpr std::size_t H = EgnWeights::kHidden;
  double s = w.b2();
  for (std::size_t h = 0; h < H; ++h) {
    double a = w.params[EgnWeights::kB1 + h];
    for (std::size_t i = 0; i < x.size(); ++i) a += w.w1(h, i) * x[i];
    s += w.params[EgnWeights::kW2 + h] * std::max(0.0, a);
  }
  return 1.0 / (1.0 + std::exp(-s));
}

std::vector<double> random_binary(Rng& rng, double density) {
  std::vector<double> x(EgnWeights::kInput, 0.0);
  for (auto& v : x) v = uniform01(rng) < density ? 1.0 : 0.0;
  return x;
}

std::vector<std::uint16_t> active_of(const std::vector<double>& x) {
  std::vector<std::uint16_t> a;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) a.push_back(static_cast<std::uint16_t>(i));
  return a;
}

std::vector<SparseSample> random_regression(std::uint64_t seed, std::size_t n,
                                            double density = 0.01) {
  Rng rng(seed);
  std::vector<SparseSample> data;
  for (std::size_t k = 0; k < n; ++k) {
    SparseSample s;
    s.active = active_of(random_binary(rng, density));
    s.target = uniform01(rng);
    data.push_back(std::move(s));
  }
  return data;
}

}  // namespace

TEST(EgnForward, ZeroWeightsGiveHalf) {
  auto w = EgnWeights::zeros();
  Rng rng(1);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(forward(w, random_binary(rng, 0.3)), 0.5);
}

TEST(EgnForward, ZeroInputUsesBiasPathOnly) {
  auto w = EgnWeights::random_uniform(3, 0.5);
  std::vector<double> x(EgnWeights::kInput, 0.0);
  double s = w.b2();
  for (std::size_t h = 0; h < EgnWeights::kHidden; ++h) {
    s += w.params[EgnWeights::kW2 + h] * std::max(0.0, w.params[EgnWeights::kB1 + h]);
  }
  EXPECT_NEAR(forward(w, x), 1.0 / (1.0 + std::exp(-s)), 1e-12);
}

TEST(EgnForward, MatchesReferenceAndIsRepeatable) {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    auto w = EgnWeights::random_uniform(100 + t, 0.05);
    auto x = random_binary(rng, 0.05);
    const double y = forward(w, x);
    EXPECT_NEAR(y, reference_forward(w, x), 1e-10);
    EXPECT_EQ(y, forward(w, x));
    EXPECT_NEAR(forward_sparse(w, active_of(x)), y, 1e-12);
  }
}

TEST(EgnForward, OutputStrictlyInsideUnitInterval) {
  Rng rng(6);
  for (double scale : {0.01, 0.1, 1.0, 5.0}) {
    auto w = EgnWeights::random_uniform(7, scale);
    for (int t = 0; t < 5; ++t) {
      const double y = forward(w, random_binary(rng, 0.2));
      EXPECT_GT(y, 0.0);
      EXPECT_LT(y, 1.0);
    }
  }
}

TEST(EgnForward, RejectsWrongLength) {
  auto w = EgnWeights::zeros();
  std::vector<double> x(10, 0.0);
  EXPECT_THROW(forward(w, x), DimensionMismatch);
}

TEST(EgnForward, ZeroDropoutEqualsEval) {
  auto w = EgnWeights::random_uniform(8, 0.1);
  Rng rng(8);
  auto x = random_binary(rng, 0.1);
  auto mask = sample_dropout(0.0, rng);
  EXPECT_EQ(forward_train(w, x, mask), forward(w, x));
}

TEST(EgnForward, DropoutMaskIsInverted) {
  Rng rng(9);
  auto mask = sample_dropout(0.25, rng);
  ASSERT_EQ(mask.size(), EgnWeights::kHidden);
  for (double m : mask) EXPECT_TRUE(m == 0.0 || std::abs(m - 1.0 / 0.75) < 1e-15);
}

TEST(EgnLoss, Examples) {
  auto w = EgnWeights::zeros();
  std::vector<double> x(EgnWeights::kInput, 0.0);
  std::vector<Sample> one{{x, 0.7}};
  EXPECT_NEAR(loss(w, one), 0.04, 1e-15);
  std::vector<Sample> two{{x, 0.7}, {x, 0.1}};
  EXPECT_NEAR(loss(w, two), 0.10, 1e-15);
  std::vector<Sample> exact{{x, 0.5}};
  EXPECT_EQ(loss(w, exact), 0.0);
  EXPECT_THROW(loss(w, std::vector<Sample>{}), EmptyBatch);
}

TEST(EgnTrain, SingleSampleImproves) {
  auto w = EgnWeights::glorot(1);
  Rng rng(1);
  std::vector<SparseSample> data{{active_of(random_binary(rng, 0.02)), 0.9}};
  auto [out, rep] = train(w, data, TrainConfig{});
  EXPECT_LT(rep.final_loss, rep.initial_loss);
  EXPECT_EQ(rep.epoch_losses.size(), 20u);
  EXPECT_EQ(out.version, w.version + 1);
  EXPECT_EQ(rep.samples, 1u);
}

TEST(EgnTrain, ConstantHalfFromZeroStaysPut) {
  auto data = random_regression(2, 40);
  for (auto& s : data) s.target = 0.5;
  auto [out, rep] = train(EgnWeights::zeros(), data, TrainConfig{});
  EXPECT_EQ(rep.final_loss, 0.0);
  for (const auto& s : data) EXPECT_EQ(forward_sparse(out, s.active), 0.5);
}

TEST(EgnTrain, SameSeedSameBytes) {
  auto data = random_regression(3, 60);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  auto w = EgnWeights::glorot(4);
  auto a = train(w, data, cfg).first;
  auto b = train(w, data, cfg).first;
  EXPECT_EQ(weights_io::serialize(a), weights_io::serialize(b));
  cfg.seed = 12;
  auto c = train(w, data, cfg).first;
  EXPECT_NE(weights_io::serialize(a), weights_io::serialize(c));
}

TEST(EgnTrain, Errors) {
  auto w = EgnWeights::zeros();
  EXPECT_THROW(train(w, std::vector<SparseSample>{}, TrainConfig{}), EmptyDataset);
  TrainConfig bad;
  bad.dropout_rate = 1.0;
  auto data = random_regression(1, 2);
  EXPECT_THROW(train(w, data, bad), InvalidParams);
}

// Dense reference Adam over every parameter; the trainer may skip rows whose
// update is provably zero but must land on the same weights.
TEST(EgnTrain, MatchesDenseAdamWithoutDropout) {
  auto data = random_regression(21, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.dropout_rate = 0.0;
  cfg.seed = 5;
  auto w0 = EgnWeights::glorot(22);
  auto fast = train(w0, data, cfg).first;

  // Replays the same shuffles as the trainer.
  EgnWeights w = w0;
  const std::size_t P = EgnWeights::kParams;
  std::vector<double> m(P, 0.0), v(P, 0.0);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, "egn-train"));
  int step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    shuffle(order, rng);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), s + cfg.batch_size);
      std::vector<double> grad(P, 0.0);
      for (std::size_t b = s; b < end; ++b) {
        sample_dropout(0.0, rng);
        std::vector<double> x(EgnWeights::kInput, 0.0);
        for (auto i : data[order[b]].active) x[i] = 1.0;
        accumulate_gradient(w, x, data[order[b]].target, {}, 1.0 / (end - s), grad);
      }
      ++step;
      const auto& a = cfg.adam;
      const double bc1 = 1.0 - std::pow(a.beta1, step), bc2 = 1.0 - std::pow(a.beta2, step);
      for (std::size_t k = 0; k < P; ++k) {
        m[k] = a.beta1 * m[k] + (1.0 - a.beta1) * grad[k];
        v[k] = a.beta2 * v[k] + (1.0 - a.beta2) * grad[k] * grad[k];
        w.params[k] -= a.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + a.epsilon);
      }
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < P; ++k) worst = std::max(worst, std::abs(w.params[k] - fast.params[k]));
  EXPECT_LT(worst, 1e-12);
}

TEST(EgnTrain, FinalBeatsFirstEpochOnRandomRegression) {
  int wins = 0;
  TrainConfig cfg;
  cfg.batch_size = 100;
  for (int trial = 0; trial < 100; ++trial) {
    auto data = random_regression(1000 + trial, 200, 0.003);
    cfg.seed = static_cast<std::uint64_t>(trial);
    auto rep = train(EgnWeights::glorot(trial), data, cfg).second;
    wins += rep.final_loss < rep.epoch_losses.front();
  }
  EXPECT_GE(wins, 95);
}

TEST(EgnGradCheck, ZeroInit) {
  Rng rng(1);
  auto x = random_binary(rng, 0.05);
  auto r = grad_check(EgnWeights::zeros(), x, 0.8, 1e-5);
  EXPECT_GE(r.checked, 100u);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(EgnGradCheck, SmallRandomWeights) {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    auto x = random_binary(rng, 0.02);
    auto w = EgnWeights::random_uniform(50 + t, 0.1);
    GradCheckOptions opt;
    opt.seed = t;
    auto r = grad_check(w, x, uniform01(rng), 1e-5, opt);
    EXPECT_GE(r.checked, 100u);
    EXPECT_LT(r.max_relative_error, 1e-4);
  }
}

TEST(EgnGradCheck, CorruptedSignIsCaught) {
  Rng rng(3);
  auto x = random_binary(rng, 0.02);
  GradCheckOptions opt;
  opt.corrupt_w2_sign = true;
  auto r = grad_check(EgnWeights::random_uniform(9, 0.1), x, 0.9, 1e-5, opt);
  EXPECT_GT(r.max_relative_error, 0.5);
}

TEST(EgnWeightsIo, RoundTrip) {
  auto w = EgnWeights::glorot(42);
  w.version = 7;
  w.round = 3;
  auto bytes = weights_io::serialize(w);
  EXPECT_EQ(bytes.size(), 4u + 4 * 3 + 8 * 3 + 8 * EgnWeights::kParams);
  auto back = weights_io::deserialize(bytes);
  EXPECT_EQ(back, w);

  auto dir = std::filesystem::temp_directory_path() / "egn_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "w.bin").string();
  weights_io::save(w, path);
  EXPECT_EQ(weights_io::load(path), w);
  std::ifstream side(path + ".json");
  auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j.at("version"), 7);
  EXPECT_EQ(j.at("fnv1a64"), fnv1a(bytes));
  std::filesystem::remove_all(dir);
}

TEST(EgnWeightsIo, RejectsDamage) {
  auto bytes = weights_io::serialize(EgnWeights::zeros());
  EXPECT_THROW(weights_io::deserialize(bytes.substr(0, bytes.size() - 1)), WeightsFormatError);
  EXPECT_THROW(weights_io::deserialize(bytes + "x"), WeightsFormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(weights_io::deserialize(bad_magic), WeightsFormatError);
  auto bad_dim = bytes;
  bad_dim[8] = 1;
  EXPECT_THROW(weights_io::deserialize(bad_dim), WeightsFormatError);
  auto nan = bytes;
  for (int i = 0; i < 8; ++i) nan[nan.size() - 8 + i] = i >= 6 ? '\xff' : '\x01';
  EXPECT_THROW(weights_io::deserialize(nan), WeightsFormatError);
  EXPECT_THROW(weights_io::load("/nonexistent/w.bin"), WeightsFormatError);
}
