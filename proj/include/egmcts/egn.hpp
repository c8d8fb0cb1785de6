#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/problem.hpp"
#include "egmcts/rng.hpp"

namespace egmcts {

// Experience guidance network: x(4096) -> relu(256) -> sigmoid(1).
//
// All parameters live in one flat vector:
//   [ W1 (input-major, W1[i*256 + h]) | b1 (256) | W2 (256) | b2 ]
// Input-major W1 makes the hidden pre-activation a sum of the columns of
// the active inputs, which is what fingerprint inputs need.
struct EgnWeights {
  static constexpr std::size_t kInput = kEgnInputSize;
  static constexpr std::size_t kHidden = 256;
  static constexpr std::size_t kW1 = 0;
  static constexpr std::size_t kB1 = kInput * kHidden;
  static constexpr std::size_t kW2 = kB1 + kHidden;
  static constexpr std::size_t kB2 = kW2 + kHidden;
  static constexpr std::size_t kParams = kB2 + 1;

  std::vector<double> params = std::vector<double>(kParams, 0.0);
  std::uint64_t version = 0;
  std::uint64_t seed = 0;
  std::uint64_t round = 0;

  static EgnWeights zeros() { return {}; }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
  static EgnWeights glorot(std::uint64_t seed, double gain = 1.0) {
    EgnWeights w;
    w.seed = seed;
    Rng rng(derive_seed(seed, "egn-init"));
    const double a1 = gain * std::sqrt(6.0 / (kInput + kHidden));
    const double a2 = gain * std::sqrt(6.0 / (kHidden + 1));
    for (std::size_t i = kW1; i < kB1; ++i) w.params[i] = uniform(rng, -a1, a1);
    for (std::size_t i = kW2; i < kB2; ++i) w.params[i] = uniform(rng, -a2, a2);
    return w;
  }

  /// Every parameter uniform in [-scale, scale].
  static EgnWeights random_uniform(std::uint64_t seed, double scale) {
    EgnWeights w;
    w.seed = seed;
    Rng rng(seed);
    for (auto& p : w.params) p = uniform(rng, -scale, scale);
    return w;
  }

  double w1(std::size_t h, std::size_t i) const { return params[kW1 + i * kHidden + h]; }
  double b2() const { return params[kB2]; }

  bool all_finite() const {
    return std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const EgnWeights&, const EgnWeights&) = default;
};

// Clamped one ulp inside (0,1) so saturated scores stay in the open interval.
inline double sigmoid(double s) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double y;
  if (s >= 0) {
    y = 1.0 / (1.0 + std::exp(-s));
  } else {
    const double e = std::exp(s);
    y = e / (1.0 + e);
  }
  return std::clamp(y, lo, hi);
}

struct ForwardCache {
  std::vector<double> pre;     // W1 x + b1
  std::vector<double> hidden;  // after relu and dropout
  double out = 0.0;
};

namespace detail {

// Shared forward core. `dropout_scale` is empty in eval mode, otherwise one
// multiplier per hidden unit (0 or 1/(1-p)).
inline double forward_core(const EgnWeights& w, std::span<const double> x,
                           std::span<const double> dropout_scale, ForwardCache* cache) {
  constexpr std::size_t H = EgnWeights::kHidden;
  if (x.size() != EgnWeights::kInput) {
    throw DimensionMismatch("expected input of " + std::to_string(EgnWeights::kInput) +
                            ", got " + std::to_string(x.size()));
  }
  double pre[H];
  const double* b1 = w.params.data() + EgnWeights::kB1;
  std::copy(b1, b1 + H, pre);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* col = w.params.data() + EgnWeights::kW1 + i * H;
    for (std::size_t h = 0; h < H; ++h) pre[h] += xi * col[h];
  }
  const double* w2 = w.params.data() + EgnWeights::kW2;
  double s = w.b2();
  if (cache) {
    cache->pre.assign(pre, pre + H);
    cache->hidden.resize(H);
  }
  for (std::size_t h = 0; h < H; ++h) {
    double a = pre[h] > 0.0 ? pre[h] : 0.0;
    if (!dropout_scale.empty()) a *= dropout_scale[h];
    if (cache) cache->hidden[h] = a;
    s += w2[h] * a;
  }
  const double out = sigmoid(s);
  if (cache) cache->out = out;
  return out;
}

}  // namespace detail

/// Eval-mode score in (0,1). Deterministic.
inline double forward(const EgnWeights& w, std::span<const double> x) {
  return detail::forward_core(w, x, {}, nullptr);
}

/// Train-mode score with an explicit dropout multiplier per hidden unit.
inline double forward_train(const EgnWeights& w, std::span<const double> x,
                            std::span<const double> dropout_scale) {
  if (dropout_scale.size() != EgnWeights::kHidden) {
    throw DimensionMismatch("dropout mask must have one entry per hidden unit");
  }
  return detail::forward_core(w, x, dropout_scale, nullptr);
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else 1/(1-rate).
inline std::vector<double> sample_dropout(double rate, Rng& rng) {
  std::vector<double> mask(EgnWeights::kHidden, 1.0);
  if (rate <= 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

struct Sample {
  std::vector<double> x;
  double target = 0.0;
};

/// Mean squared error over the batch, eval mode.
inline double loss(const EgnWeights& w, std::span<const Sample> batch) {
  if (batch.empty()) throw EmptyBatch("loss over an empty batch");
  double sum = 0.0;
  for (const auto& s : batch) {
    const double d = forward(w, s.x) - s.target;
    sum += d * d;
  }
  return sum / static_cast<double>(batch.size());
}

/// Adds scale * d(f(x) - target)^2 / d(params) into `grad` (size kParams).
/// Returns the squared error. Only W1 rows of non-zero inputs are touched.
inline double accumulate_gradient(const EgnWeights& w, std::span<const double> x, double target,
                                  std::span<const double> dropout_scale, double scale,
                                  std::span<double> grad) {
  constexpr std::size_t H = EgnWeights::kHidden;
  ForwardCache c;
  const double out = detail::forward_core(w, x, dropout_scale, &c);
  const double err = out - target;
  const double delta = scale * 2.0 * err * out * (1.0 - out);  // d/ds
  grad[EgnWeights::kB2] += delta;
  const double* w2 = w.params.data() + EgnWeights::kW2;
  double da[H];
  for (std::size_t h = 0; h < H; ++h) {
    grad[EgnWeights::kW2 + h] += delta * c.hidden[h];
    double g = delta * w2[h];
    if (!dropout_scale.empty()) g *= dropout_scale[h];
    da[h] = c.pre[h] > 0.0 ? g : 0.0;
    grad[EgnWeights::kB1 + h] += da[h];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* gcol = grad.data() + EgnWeights::kW1 + i * H;
    for (std::size_t h = 0; h < H; ++h) gcol[h] += da[h] * xi;
  }
  return err * err;
}

struct GradCheckOptions {
  std::size_t min_checked = 100;
  std::uint64_t seed = 0;
  bool corrupt_w2_sign = false;  // negative control for the harness itself
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
};

/// Analytic per-sample gradient against central differences with step `h`
/// on a sampled parameter subset (mixing active W1 entries, inactive W1
/// entries, b1, W2 and b2). Parameters whose perturbation would straddle a
/// relu kink are skipped and counted.
inline GradCheckResult grad_check(const EgnWeights& w, std::span<const double> x, double target,
                                  double h = 1e-5, const GradCheckOptions& opt = {}) {
  constexpr std::size_t H = EgnWeights::kHidden;
  std::vector<double> grad(EgnWeights::kParams, 0.0);
  accumulate_gradient(w, x, target, {}, 1.0, grad);
  if (opt.corrupt_w2_sign) {
    for (std::size_t k = EgnWeights::kW2; k < EgnWeights::kB2; ++k) grad[k] = -grad[k];
  }
  ForwardCache c;
  detail::forward_core(w, x, {}, &c);

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) active.push_back(i);

  Rng rng(opt.seed);
  std::vector<std::size_t> candidates;
  for (int t = 0; t < 60 && !active.empty(); ++t) {
    candidates.push_back(EgnWeights::kW1 + active[uniform_index(rng, active.size())] * H +
                         uniform_index(rng, H));
  }
  for (int t = 0; t < 10; ++t) candidates.push_back(uniform_index(rng, EgnWeights::kB1));
  for (int t = 0; t < 30; ++t) candidates.push_back(EgnWeights::kB1 + uniform_index(rng, H));
  for (int t = 0; t < 30; ++t) candidates.push_back(EgnWeights::kW2 + uniform_index(rng, H));
  candidates.push_back(EgnWeights::kB2);

  auto unit_of = [&](std::size_t k) -> std::ptrdiff_t {
    if (k < EgnWeights::kB1) return static_cast<std::ptrdiff_t>(k % H);
    if (k < EgnWeights::kW2) return static_cast<std::ptrdiff_t>(k - EgnWeights::kB1);
    return -1;
  };

  EgnWeights probe = w;
  auto sq = [&](const EgnWeights& ww) {
    const double d = forward(ww, x) - target;
    return d * d;
  };
  GradCheckResult res;
  std::size_t round = 0;
  while (res.checked < opt.min_checked && round < 20) {
    for (std::size_t k : candidates) {
      const auto u = unit_of(k);
      const double shift = k < EgnWeights::kB1 ? h * std::abs(x[k / H]) : h;
      if (u >= 0 && std::abs(c.pre[u]) <= 2.0 * shift && w.params[EgnWeights::kW2 + u] != 0.0) {
        ++res.skipped_at_kink;
        continue;
      }
      const double orig = probe.params[k];
      probe.params[k] = orig + h;
      const double lp = sq(probe);
      probe.params[k] = orig - h;
      const double lm = sq(probe);
      probe.params[k] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = grad[k];
      const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-6);
      res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - analytic) / denom);
      ++res.checked;
    }
    ++round;
    candidates.clear();
    for (int t = 0; t < 50; ++t) candidates.push_back(uniform_index(rng, EgnWeights::kParams));
  }
  return res;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int epochs = 20;
  double dropout_rate = 0.1;
  AdamConfig adam;
  int batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw InvalidParams("epochs must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw InvalidParams("dropout rate must be in [0,1)");
    }
    if (batch_size < 1) throw InvalidParams("batch size must be >= 1");
  }
};

struct TrainReport {
  std::vector<double> epoch_losses;  // mean train-mode loss per epoch
  double initial_loss = 0.0;         // eval-mode loss before training
  double final_loss = 0.0;           // eval-mode loss after training
  std::size_t samples = 0;
};

/// Binary input given by its non-zero indices (each with value 1).
struct SparseSample {
  std::vector<std::uint16_t> active;
  double target = 0.0;
};

inline SparseSample to_sparse(const Fingerprint& mol, const Fingerprint& tmpl, double target) {
  SparseSample s;
  s.target = target;
  for (std::size_t i = 0; i < kFingerprintBits; ++i)
    if (mol[i]) s.active.push_back(static_cast<std::uint16_t>(i));
  for (std::size_t i = 0; i < kFingerprintBits; ++i)
    if (tmpl[i]) s.active.push_back(static_cast<std::uint16_t>(kFingerprintBits + i));
  return s;
}

namespace detail {

inline double forward_sparse(const EgnWeights& w, std::span<const std::uint16_t> active,
                             std::span<const double> dropout_scale, double* pre_out,
                             double* hidden_out) {
  constexpr std::size_t H = EgnWeights::kHidden;
  double pre[H];
  const double* b1 = w.params.data() + EgnWeights::kB1;
  std::copy(b1, b1 + H, pre);
  for (auto i : active) {
    const double* col = w.params.data() + EgnWeights::kW1 + std::size_t{i} * H;
    for (std::size_t h = 0; h < H; ++h) pre[h] += col[h];
  }
  const double* w2 = w.params.data() + EgnWeights::kW2;
  double s = w.b2();
  for (std::size_t h = 0; h < H; ++h) {
    double a = pre[h] > 0.0 ? pre[h] : 0.0;
    if (!dropout_scale.empty()) a *= dropout_scale[h];
    if (pre_out) pre_out[h] = pre[h];
    if (hidden_out) hidden_out[h] = a;
    s += w2[h] * a;
  }
  return sigmoid(s);
}

}  // namespace detail

/// Eval-mode score for a binary input given by active indices. Equal to
/// forward() on the corresponding dense vector.
inline double forward_sparse(const EgnWeights& w, std::span<const std::uint16_t> active) {
  return detail::forward_sparse(w, active, {}, nullptr, nullptr);
}

inline double eval_loss(const EgnWeights& w, std::span<const SparseSample> data) {
  if (data.empty()) throw EmptyBatch("loss over an empty batch");
  double sum = 0.0;
  for (const auto& s : data) {
    const double d = forward_sparse(w, s.active) - s.target;
    sum += d * d;
  }
  return sum / static_cast<double>(data.size());
}

/// Mini-batch Adam on mean squared error with inverted dropout on the
/// hidden layer. Starts from `w`; the returned weights carry version + 1.
/// Bit-identical for identical (w, data, cfg).
inline std::pair<EgnWeights, TrainReport> train(const EgnWeights& w,
                                                std::span<const SparseSample> data,
                                                const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw EmptyDataset("no training samples");
  constexpr std::size_t H = EgnWeights::kHidden;
  constexpr std::size_t P = EgnWeights::kParams;

  EgnWeights out = w;
  out.version = w.version + 1;
  TrainReport report;
  report.samples = data.size();
  report.initial_loss = eval_loss(w, data);

  std::vector<double> grad(P, 0.0), m(P, 0.0), v(P, 0.0);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::uint16_t> touched;
  std::vector<std::uint8_t> touched_flag(EgnWeights::kInput, 0);
  std::vector<std::uint8_t> live(EgnWeights::kInput, 0);
  std::vector<std::uint16_t> live_rows;
  Rng rng(derive_seed(cfg.seed, "egn-train"));
  std::uint64_t step = 0;
  const auto& a = cfg.adam;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto i : touched) {
        std::fill_n(grad.data() + EgnWeights::kW1 + std::size_t{i} * H, H, 0.0);
        touched_flag[i] = 0;
      }
      touched.clear();
      std::fill(grad.begin() + EgnWeights::kB1, grad.end(), 0.0);

      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& s = data[order[bi]];
        auto mask = sample_dropout(cfg.dropout_rate, rng);
        double pre[H], hid[H];
        const double y = detail::forward_sparse(out, s.active, mask, pre, hid);
        const double err = y - s.target;
        epoch_loss += err * err;
        const double delta = scale * 2.0 * err * y * (1.0 - y);
        grad[EgnWeights::kB2] += delta;
        double da[H];
        for (std::size_t h = 0; h < H; ++h) {
          grad[EgnWeights::kW2 + h] += delta * hid[h];
          const double g = delta * out.params[EgnWeights::kW2 + h] * mask[h];
          da[h] = pre[h] > 0.0 ? g : 0.0;
          grad[EgnWeights::kB1 + h] += da[h];
        }
        for (auto i : s.active) {
          if (!touched_flag[i]) {
            touched_flag[i] = 1;
            touched.push_back(i);
          }
          double* gcol = grad.data() + EgnWeights::kW1 + std::size_t{i} * H;
          for (std::size_t h = 0; h < H; ++h) gcol[h] += da[h];
        }
      }

      ++step;
      const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
      const double lr = a.learning_rate;
      auto adam = [&](std::size_t from, std::size_t to) {
        double* __restrict p = out.params.data();
        double* __restrict mm = m.data();
        double* __restrict vv = v.data();
        const double* __restrict gg = grad.data();
        for (std::size_t k = from; k < to; ++k) {
          const double g = gg[k];
          mm[k] = a.beta1 * mm[k] + (1.0 - a.beta1) * g;
          vv[k] = a.beta2 * vv[k] + (1.0 - a.beta2) * g * g;
          p[k] -= lr * (mm[k] / bc1) / (std::sqrt(vv[k] / bc2) + a.epsilon);
        }
      };
      // A W1 row that has never received gradient has m = v = 0 and so a
      // zero update; skipping it changes nothing.
      for (auto i : touched) {
        if (!live[i]) {
          live[i] = 1;
          live_rows.push_back(i);
        }
      }
      for (auto i : live_rows) {
        adam(EgnWeights::kW1 + std::size_t{i} * H, EgnWeights::kW1 + (std::size_t{i} + 1) * H);
      }
      adam(EgnWeights::kB1, P);
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  report.final_loss = eval_loss(out, data);
  return {std::move(out), std::move(report)};
}

// Weights file: little-endian binary.
//   magic "EGNW" | u32 format | u32 input | u32 hidden | u64 version |
//   u64 seed | u64 round | f64 W1[hidden][input] (row-major) |
//   f64 b1[hidden] | f64 W2[hidden] | f64 b2
namespace weights_io {

inline constexpr std::uint32_t kFormat = 1;

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& s, double d) { put_u64(s, std::bit_cast<std::uint64_t>(d)); }

inline std::uint64_t get(std::string_view s, std::size_t& pos, int bytes) {
  if (pos + bytes > s.size()) throw WeightsFormatError("truncated weights file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= std::uint64_t{static_cast<unsigned char>(s[pos + i])} << (8 * i);
  pos += bytes;
  return v;
}

inline std::string serialize(const EgnWeights& w) {
  constexpr std::size_t H = EgnWeights::kHidden, I = EgnWeights::kInput;
  std::string s = "EGNW";
  s.reserve(48 + EgnWeights::kParams * 8);
  put_u32(s, kFormat);
  put_u32(s, static_cast<std::uint32_t>(I));
  put_u32(s, static_cast<std::uint32_t>(H));
  put_u64(s, w.version);
  put_u64(s, w.seed);
  put_u64(s, w.round);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < I; ++i) put_f64(s, w.w1(h, i));
  for (std::size_t k = EgnWeights::kB1; k < EgnWeights::kParams; ++k) put_f64(s, w.params[k]);
  return s;
}

inline EgnWeights deserialize(std::string_view s) {
  constexpr std::size_t H = EgnWeights::kHidden, I = EgnWeights::kInput;
  if (s.substr(0, 4) != "EGNW") throw WeightsFormatError("bad magic");
  std::size_t pos = 4;
  if (get(s, pos, 4) != kFormat) throw WeightsFormatError("unsupported format version");
  if (get(s, pos, 4) != I || get(s, pos, 4) != H) throw WeightsFormatError("dimension mismatch");
  EgnWeights w;
  w.version = get(s, pos, 8);
  w.seed = get(s, pos, 8);
  w.round = get(s, pos, 8);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < I; ++i)
      w.params[EgnWeights::kW1 + i * H + h] = std::bit_cast<double>(get(s, pos, 8));
  for (std::size_t k = EgnWeights::kB1; k < EgnWeights::kParams; ++k)
    w.params[k] = std::bit_cast<double>(get(s, pos, 8));
  if (pos != s.size()) throw WeightsFormatError("trailing bytes");
  if (!w.all_finite()) throw WeightsFormatError("non-finite weight");
  return w;
}

inline nlohmann::json sidecar(const EgnWeights& w, std::string_view bytes) {
  return {{"format", "egmcts-egn-weights"},
          {"format_version", kFormat},
          {"input", EgnWeights::kInput},
          {"hidden", EgnWeights::kHidden},
          {"version", w.version},
          {"seed", w.seed},
          {"round", w.round},
          {"fnv1a64", fnv1a(bytes)}};
}

/// Writes `path` and `path + ".json"`.
inline void save(const EgnWeights& w, const std::string& path) {
  const std::string bytes = serialize(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightsFormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream side(path + ".json");
  side << sidecar(w, bytes).dump(2) << '\n';
}

inline EgnWeights load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightsFormatError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace weights_io

}  // namespace egmcts
