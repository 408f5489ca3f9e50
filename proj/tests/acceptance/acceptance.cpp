// Acceptance suite: one test per criterion, one PASS/FAIL line each.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "evsal/checkpoint.hpp"
#include "evsal/config.hpp"
#include "evsal/error.hpp"
#include "evsal/esim.hpp"
#include "evsal/event_core.hpp"
#include "evsal/gradcheck.hpp"
#include "evsal/losses.hpp"
#include "evsal/metrics.hpp"
#include "evsal/model.hpp"
#include "evsal/ops.hpp"
#include "evsal/training.hpp"
#include "oracles.hpp"

using namespace evsal;
using Clock = std::chrono::steady_clock;

namespace {

std::map<std::string, std::string> g_detail;

void detail(const std::string& text) {
  g_detail[::testing::UnitTest::GetInstance()->current_test_info()->name()] = text;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

void expect_within_budget(Clock::time_point start, double budget_s, std::string& note) {
  const double t = seconds_since(start);
  note += ", " + fmt(t) + " s (budget " + fmt(budget_s) + " s)";
  EXPECT_LT(t, budget_s) << "over time budget";
}

class LinePrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    const bool ok = info.result()->Passed();
    std::cout << (ok ? "PASS " : "FAIL ") << info.name() << ": " << g_detail[info.name()] << std::endl;
  }
  void OnTestPartResult(const ::testing::TestPartResult& r) override {
    if (r.failed()) std::cerr << "  " << r.file_name() << ":" << r.line_number() << ": " << r.summary() << '\n';
  }
};

// Metrics ------------------------------------------------------------------

struct MetricErrors {
  double max_err = 0;
  std::size_t cases = 0;
  void add(double a, double b) {
    max_err = std::max(max_err, std::abs(a - b));
    ++cases;
  }
};

SaliencyMap as_map(std::size_t w, std::size_t h, const oracle::Grid& g) { return {w, h, g}; }

FixationSet fix_from_mask(std::size_t w, std::size_t h, unsigned mask, std::vector<std::size_t>& flat) {
  flat.clear();
  std::vector<std::pair<std::size_t, std::size_t>> xy;
  for (std::size_t i = 0; i < w * h; ++i) {
    if (mask >> i & 1u) {
      flat.push_back(i);
      xy.emplace_back(i % w, i / w);
    }
  }
  return FixationSet({static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h)}, xy);
}

bool constant(const oracle::Grid& g) {
  return std::all_of(g.begin(), g.end(), [&](double v) { return v == g[0]; });
}

// Every fixation subset for the fixation metrics; CC and SIM against every
// map in `partners`.
void check_map(std::size_t w, std::size_t h, const oracle::Grid& m, const std::vector<oracle::Grid>& partners,
               MetricErrors& e) {
  const SaliencyMap pm = as_map(w, h, m);
  const std::size_t n = w * h;
  std::vector<std::size_t> flat;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    const FixationSet fix = fix_from_mask(w, h, mask, flat);
    e.add(nss(pm, fix), oracle::nss(m, flat));
    if (flat.size() < n) e.add(auc_judd(pm, fix), oracle::auc_judd(m, flat));
  }
  for (const oracle::Grid& g : partners) {
    const SaliencyMap gm = as_map(w, h, g);
    e.add(sim(pm, gm), oracle::similarity(m, g, kDistributionEps));
    if (constant(m) || constant(g)) {
      bool threw = false;
      try {
        cc(pm, gm);
      } catch (const Error& err) {
        threw = err.kind() == ErrorKind::ZeroVariance;
      }
      EXPECT_TRUE(threw);
    } else {
      e.add(cc(pm, gm), oracle::pearson(m, g));
    }
  }
}

std::vector<oracle::Grid> all_maps(std::size_t n, const std::vector<double>& alphabet) {
  std::vector<oracle::Grid> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= alphabet.size();
  for (std::size_t code = 0; code < total; ++code) {
    oracle::Grid g(n);
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i, c /= alphabet.size()) g[i] = alphabet[c % alphabet.size()];
    out.push_back(std::move(g));
  }
  return out;
}

// Model --------------------------------------------------------------------

Tensor toy_input(std::size_t b, std::size_t t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Shape s{b, t, 2, 64, 64};
  return Tensor(s, oracle::random_grid(shape_numel(s), rng, 0.0, 2.0));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(double)) == 0;
}

void copy_weights(SestModel& from, SestModel& to) {
  for (Parameter* dst : to.parameters()) {
    const Parameter* src = from.find(dst->name);
    ASSERT_NE(src, nullptr) << dst->name;
    ASSERT_EQ(src->value.numel(), dst->value.numel()) << dst->name;
    dst->value = src->value.reshaped(dst->value.shape());
  }
}

}  // namespace

TEST(Acceptance, C01_MetricOracleEquivalence) {
  const auto start = Clock::now();
  MetricErrors e;
  const std::vector<double> ternary{0.0, 0.5, 1.0};
  for (const auto& [w, h] : std::vector<std::pair<std::size_t, std::size_t>>{
           {1, 1}, {2, 1}, {1, 2}, {3, 1}, {1, 3}, {2, 2}, {3, 2}, {2, 3}}) {
    const auto maps = all_maps(w * h, ternary);
    for (const auto& m : maps) check_map(w, h, m, maps, e);
  }
  // 3x3: every binary map against every binary map, plus random real maps.
  const auto binary = all_maps(9, {0.0, 1.0});
  for (const auto& m : binary) check_map(3, 3, m, {}, e);
  for (std::size_t i = 0; i < binary.size(); ++i) {
    for (std::size_t j = 0; j < binary.size(); j += 7) check_map(3, 3, binary[i], {binary[j]}, e);
  }
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_grid(9, rng, 0, 1);
    check_map(3, 3, m, {oracle::random_grid(9, rng, 0, 1)}, e);
  }
  // 1000 random 8x8 instances.
  for (int i = 0; i < 1000; ++i) {
    const auto p = oracle::random_grid(64, rng, 0, 1), g = oracle::random_grid(64, rng, 0, 1);
    const SaliencyMap pm = as_map(8, 8, p), gm = as_map(8, 8, g);
    std::vector<std::size_t> idx(64);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(1 + rng() % 20);
    std::vector<std::pair<std::size_t, std::size_t>> xy;
    for (std::size_t f : idx) xy.emplace_back(f % 8, f / 8);
    const FixationSet fix({8, 8}, xy);
    e.add(auc_judd(pm, fix), oracle::auc_judd(p, idx));
    e.add(nss(pm, fix), oracle::nss(p, idx));
    e.add(cc(pm, gm), oracle::pearson(p, g));
    e.add(sim(pm, gm), oracle::similarity(p, g, kDistributionEps));
  }
  EXPECT_LE(e.max_err, 1e-9);
  std::string note = std::to_string(e.cases) + " comparisons, max abs err " + fmt(e.max_err) + " (tol 1e-9)";
  expect_within_budget(start, 30, note);
  detail(note);
}

TEST(Acceptance, C02_GradientIntegrity) {
  const auto start = Clock::now();
  std::mt19937_64 rng(7);
  auto rnd = [&](Shape s, double lo = -1, double hi = 1) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), oracle::random_grid(n, rng, lo, hi));
  };
  auto project = [](Tape& t, const Var& y) {
    std::mt19937_64 r(99);
    const std::size_t n = y.value().numel();
    return ops::sum(ops::mul(y, t.constant(Tensor(y.shape(), oracle::random_grid(n, r)))));
  };
  struct Case {
    std::string name;
    std::function<Var(Tape&, const Var&)> op;
    Tensor x;
  };
  const Tensor a = rnd({2, 3, 4}), b = rnd({2, 4, 3}), bias = rnd({4}), g5 = rnd({5}), b5 = rnd({5});
  const Tensor x5 = rnd({3, 5}, -2, 2), bn_x = rnd({2, 3, 2, 3, 3}), g3 = rnd({3}), b3 = rnd({3});
  const Tensor cx = rnd({1, 2, 3, 5, 4}), cw = rnd({2, 2, 3, 3, 3}), cb = rnd({2});
  const Tensor dx = rnd({1, 2, 6, 6}), dw = rnd({2, 2, 3, 3});
  const Tensor map = rnd({2, 9, 8}), gain = rnd({9, 8});
  Tensor kinked = rnd({3, 4});
  for (double& v : kinked.data()) v = v < 0 ? std::min(v, -0.05) : std::max(v, 0.05);
  // One clear minimum per map: the min-shift makes KL stiff next to it.
  Tensor pred = rnd({2, 3, 4}, 0.3, 0.95);
  for (std::size_t m = 0; m < 2; ++m) pred[m * 12] = 0.05;
  const Tensor gt = rnd({2, 3, 4}, 0, 1);
  const std::vector<Case> cases{
      {"add", [&](Tape& t, const Var& v) { return ops::add(v, t.constant(a)); }, a},
      {"sub", [&](Tape& t, const Var& v) { return ops::sub(t.constant(a), v); }, a},
      {"mul", [](Tape&, const Var& v) { return ops::mul(v, v); }, a},
      {"scale", [](Tape&, const Var& v) { return ops::scale(v, 1.7); }, a},
      {"mean", [](Tape&, const Var& v) { return ops::mean(v); }, a},
      {"reshape", [](Tape&, const Var& v) { return ops::reshape(v, {6, 4}); }, a},
      {"permute", [](Tape&, const Var& v) { return ops::permute(v, {2, 0, 1}); }, a},
      {"concat", [&](Tape& t, const Var& v) { return ops::concat({t.constant(a), v}, 2); }, a},
      {"transpose", [](Tape&, const Var& v) { return ops::transpose_last2(v); }, a},
      {"matmul.a", [&](Tape& t, const Var& v) { return ops::matmul(v, t.constant(b)); }, a},
      {"matmul.b", [&](Tape& t, const Var& v) { return ops::matmul(t.constant(a), v); }, b},
      {"add_bias", [&](Tape& t, const Var& v) { return ops::add_bias(t.constant(a), v); }, bias},
      {"softmax", [](Tape&, const Var& v) { return ops::softmax(v, 1); }, x5},
      {"layer_norm.x", [&](Tape& t, const Var& v) { return ops::layer_norm(v, t.constant(g5), t.constant(b5)); }, x5},
      {"layer_norm.gamma", [&](Tape& t, const Var& v) { return ops::layer_norm(t.constant(x5), v, t.constant(b5)); }, g5},
      {"conv3d.x", [&](Tape& t, const Var& v) { return ops::conv3d(v, t.constant(cw), t.constant(cb), {{1, 1, 1}, {1, 1, 1}}); }, cx},
      {"conv3d.w", [&](Tape& t, const Var& v) { return ops::conv3d(t.constant(cx), v, t.constant(cb), {{1, 1, 1}, {1, 1, 1}}); }, cw},
      {"conv3d.b", [&](Tape& t, const Var& v) { return ops::conv3d(t.constant(cx), t.constant(cw), v, {{1, 1, 1}, {1, 1, 1}}); }, cb},
      {"conv2d.x", [&](Tape& t, const Var& v) { return ops::conv2d(v, t.constant(dw), Var{}, {{2, 2}, {1, 1}}); }, dx},
      {"conv2d.w", [&](Tape& t, const Var& v) { return ops::conv2d(t.constant(dx), v, Var{}, {{2, 2}, {1, 1}}); }, dw},
      {"batch_norm3d.x", [&](Tape& t, const Var& v) {
         ops::BatchNormState st(3);
         return ops::batch_norm3d(v, t.constant(g3), t.constant(b3), st, ops::NormMode::Train);
       }, bn_x},
      {"batch_norm3d.gamma", [&](Tape& t, const Var& v) {
         ops::BatchNormState st(3);
         return ops::batch_norm3d(t.constant(bn_x), v, t.constant(b3), st, ops::NormMode::Train);
       }, g3},
      {"upsample_trilinear", [](Tape&, const Var& v) { return ops::upsample_trilinear(v, 7, 5); }, bn_x},
      {"leaky_relu", [](Tape&, const Var& v) { return ops::leaky_relu(v, 0.01); }, kinked},
      {"sigmoid", [](Tape&, const Var& v) { return ops::sigmoid(v); }, a},
      {"gaussian_blur2d", [](Tape&, const Var& v) { return ops::gaussian_blur2d(v, 2.0, 4); }, map},
      {"spatial_gain", [&](Tape& t, const Var& v) { return ops::spatial_gain(t.constant(map), v); }, gain},
      {"loss_kl", [&](Tape&, const Var& v) { return loss_kl(v, gt); }, pred},
      {"loss_cc", [&](Tape&, const Var& v) { return loss_cc(v, gt); }, pred},
      {"loss_bce", [&](Tape&, const Var& v) { return loss_bce(v, gt); }, pred},
      {"combined_loss", [&](Tape&, const Var& v) { return combined_loss(v, gt); }, pred},
  };
  double worst_op = 0;
  std::string worst_name;
  for (const Case& c : cases) {
    const auto r = grad_check([&](Tape& t, const Var& v) { return project(t, c.op(t, v)); }, c.x);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name;
    if (r.max_rel_error > worst_op) {
      worst_op = r.max_rel_error;
      worst_name = c.name;
    }
  }

  // Full model loss on a 2-sample toy batch.
  const GradCheckConfig gc;
  SynthConfig sc;
  const Dataset data = synth_dataset(sc, 2, 1);
  const Tensor x = batch_input(data, {0, 1});
  const Tensor y = batch_target(data, {0, 1});
  SestModel model(ModelConfig{}, 1);
  const GradCheckResult r = grad_check_params(
      [&](Tape& tape) { return combined_loss(model.forward(tape, tape.constant(x), ops::NormMode::Train), y); },
      model.parameters(), gc.h, gc.samples, 1, gc.method);
  // Probes that straddle a leaky_relu kink at every step are not compared;
  // they must stay rare.
  EXPECT_LE(r.skipped * 100, r.checked) << r.skipped << " probes skipped";
  EXPECT_LT(r.max_rel_error, 1e-4) << r.where << "[" << r.index << "] analytic " << r.analytic << " numeric "
                                   << r.numeric;
  std::string note = std::to_string(cases.size()) + " op checks, worst " + fmt(worst_op) + " (" + worst_name +
                     ", tol 1e-6); model " + std::to_string(r.checked) + " coords, worst " + fmt(r.max_rel_error) +
                     " at " + r.where + " (tol 1e-4), " + std::to_string(r.refined) + " probes across kinks, " +
                     std::to_string(r.skipped) + " skipped";
  expect_within_budget(start, 300, note);
  detail(note);
}

TEST(Acceptance, C03_SimulatorLaw) {
  const auto start = Clock::now();
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0, total_events = 0;
  for (int trial = 0; trial < 500; ++trial) {
    SimConfig cfg;
    cfg.refractory_us = 0;
    const double c = 0.01 + 0.5 * u(rng);
    cfg.c_pos = cfg.c_neg = c;
    const double i_lo = 0.005 + 0.05 * u(rng);
    const double l_lo = std::log(i_lo + cfg.log_eps);
    const double dl = (std::log(1.0 + cfg.log_eps) - l_lo) * u(rng);
    const bool rising = trial % 2 == 0;
    const std::size_t n_frames = 2 + rng() % 5;
    // Monotone ramp through n_frames levels, uneven steps.
    std::vector<double> cuts{0.0, 1.0};
    for (std::size_t k = 2; k < n_frames; ++k) cuts.push_back(u(rng));
    std::sort(cuts.begin(), cuts.end());
    std::vector<Frame> frames;
    std::int64_t t = 0;
    for (double f : cuts) {
      const double level = rising ? l_lo + f * dl : l_lo + (1 - f) * dl;
      frames.push_back({t, Image(1, 1, std::clamp(std::exp(level) - cfg.log_eps, 0.0, 1.0))});
      t += 1000 + static_cast<std::int64_t>(rng() % 20000);
    }
    const double l0 = log_intensity(frames.front(), cfg.log_eps).values[0];
    const double l1 = log_intensity(frames.back(), cfg.log_eps).values[0];
    const auto expected = static_cast<std::size_t>(std::floor((rising ? l1 - l0 : l0 - l1) / c));
    const EventStream s = simulate(frames, cfg);
    total_events += s.events.size();
    if (s.events.size() != expected) ++mismatches;
    for (const Event& e : s.events) EXPECT_EQ(e.p, rising ? 1 : -1);
  }
  EXPECT_EQ(mismatches, 0u);

  std::size_t constant_events = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Image img(7, 5);
    for (double& v : img.values) v = u(rng);
    std::vector<Frame> frames;
    for (int k = 0; k < 4; ++k) frames.push_back({k * 33'333, img});
    constant_events += simulate(frames, SimConfig{}).events.size();
  }
  EXPECT_EQ(constant_events, 0u);
  std::string note = "500 ramps, " + std::to_string(mismatches) + " count mismatches (" +
                     std::to_string(total_events) + " events), constant videos " +
                     std::to_string(constant_events) + " events";
  expect_within_budget(start, 10, note);
  detail(note);
}

TEST(Acceptance, C04_VoxelConservation) {
  const auto start = Clock::now();
  std::mt19937_64 rng(44);
  std::size_t failures = 0;
  std::uint64_t events_seen = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const SensorGeometry g{static_cast<std::uint32_t>(1 + rng() % 16), static_cast<std::uint32_t>(1 + rng() % 16)};
    const std::size_t bins = 1 + rng() % 8;
    const std::int64_t dur = 1 + static_cast<std::int64_t>(rng() % 5000);
    const std::int64_t origin = static_cast<std::int64_t>(rng() % 20000) - 10000;
    const std::size_t n = rng() % 400;
    std::vector<std::int64_t> ts(n);
    for (auto& t : ts) t = origin - 5000 + static_cast<std::int64_t>(rng() % (bins * dur + 10000));
    std::sort(ts.begin(), ts.end());
    EventStream s{g, {}};
    std::uint64_t in_window = 0, pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int8_t p = rng() % 2 ? 1 : -1;
      s.events.push_back({static_cast<std::uint16_t>(rng() % g.width), static_cast<std::uint16_t>(rng() % g.height),
                          ts[i], p});
      if (ts[i] >= origin && ts[i] < origin + static_cast<std::int64_t>(bins) * dur) {
        ++in_window;
        pos += p > 0;
      }
    }
    const VoxelGrid v = voxelize(s, bins, dur, origin);
    events_seen += n;
    if (v.total() != in_window || v.channel_total(0) != pos || v.channel_total(1) != in_window - pos ||
        v.channel_total(0) + v.channel_total(1) != v.total()) {
      ++failures;
    }
  }
  EXPECT_EQ(failures, 0u);
  std::string note = "1000 streams (" + std::to_string(events_seen) + " events), " + std::to_string(failures) +
                     " conservation failures";
  expect_within_budget(start, 10, note);
  detail(note);
}

TEST(Acceptance, C05_ShapeContract) {
  const auto start = Clock::now();
  SestModel model(ModelConfig{}, 5);
  std::size_t out_of_range = 0;
  for (std::size_t t : {1, 2, 7}) {
    const Tensor x = toy_input(2, t, 50 + t);
    const Tensor eval = model.predict(x);
    Tape tape(false);
    const Tensor train = model.forward(tape, tape.constant(x), ops::NormMode::Train).value();
    for (const Tensor* y : {&eval, &train}) {
      EXPECT_EQ(y->shape(), (Shape{2, t, 1, 64, 64}));
      for (double v : y->data()) out_of_range += !(v > 0.0 && v < 1.0);
    }
  }
  EXPECT_EQ(out_of_range, 0u);
  std::string note = "T in {1,2,7}, B=2: [B,T,1,64,64], " + std::to_string(out_of_range) + " values outside (0,1)";
  expect_within_budget(start, 60, note);
  detail(note);
}

TEST(Acceptance, C06_AblationEquivalences) {
  const auto start = Clock::now();
  const Tensor x = toy_input(1, 3, 60);

  // (a) Zero center bias vs. no center bias, shared weights.
  ModelConfig with_cb;
  ModelConfig without_cb = with_cb;
  without_cb.center_bias = false;
  SestModel a(with_cb, 6), b(without_cb, 77);
  a.center_bias()->value.fill(0.0);
  copy_weights(a, b);
  const bool eval_a = bitwise_equal(a.predict(x), b.predict(x));
  Tape ta(false), tb(false);
  const bool train_a = bitwise_equal(a.forward(ta, ta.constant(x), ops::NormMode::Train).value(),
                                     b.forward(tb, tb.constant(x), ops::NormMode::Train).value());
  EXPECT_TRUE(eval_a && train_a);

  // (b) conv3d decoder with temporal kernel 1 vs. per-bin conv2d decoder.
  ModelConfig k1;
  k1.decoder_kt = 1;
  ModelConfig c2 = k1;
  c2.decoder = DecoderKind::Conv2d;
  SestModel m3(k1, 8), m2(c2, 88);
  copy_weights(m3, m2);
  const bool eval_b = bitwise_equal(m3.predict(x), m2.predict(x));
  Tape t3(false), t2(false);
  const bool train_b = bitwise_equal(m3.forward(t3, t3.constant(x), ops::NormMode::Train).value(),
                                     m2.forward(t2, t2.constant(x), ops::NormMode::Train).value());
  EXPECT_TRUE(eval_b && train_b);

  // Op level: conv3d(kt=1) against conv2d on each bin.
  std::mt19937_64 rng(9);
  const Tensor vx(Shape{2, 4, 5, 9, 9}, oracle::random_grid(2 * 4 * 5 * 81, rng));
  const Tensor vw(Shape{3, 4, 1, 3, 3}, oracle::random_grid(3 * 4 * 9, rng));
  const Tensor vb(Shape{3}, oracle::random_grid(3, rng));
  Tape t(false);
  const Tensor y3 = ops::conv3d(t.constant(vx), t.constant(vw), t.constant(vb), {{1, 1, 1}, {0, 1, 1}}).value();
  const Tensor flat = ops::reshape(ops::permute(t.constant(vx), {0, 2, 1, 3, 4}), {10, 4, 9, 9}).value();
  const Tensor y2 = ops::conv2d(t.constant(flat), t.constant(vw.reshaped({3, 4, 3, 3})), t.constant(vb),
                                {{1, 1}, {1, 1}})
                        .value();
  const Tensor y2b = ops::permute(t.constant(y2.reshaped({2, 5, 3, 9, 9})), {0, 2, 1, 3, 4}).value();
  const bool op_b = bitwise_equal(y3, y2b);
  EXPECT_TRUE(op_b);

  std::string note = std::string("M_b=0 vs no-center-bias bitwise: ") + (eval_a && train_a ? "yes" : "no") +
                     "; conv3d(kt=1) vs conv2d decoder bitwise: " + (eval_b && train_b ? "yes" : "no") +
                     "; op level: " + (op_b ? "yes" : "no");
  expect_within_budget(start, 60, note);
  detail(note);
}

TEST(Acceptance, C07_OverfitSanity) {
  const auto start = Clock::now();
  const Dataset data = synth_dataset(SynthConfig{}, 4, 7);
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.max_steps = 200;
  cfg.seed = 7;
  auto run = [&] {
    SestModel model(ModelConfig{}, 7);
    return train(model, data, data, cfg);
  };
  const TrainResult first = run();
  const TrainResult second = run();
  ASSERT_FALSE(first.step_losses.empty());
  const double initial = first.step_losses.front();
  const double final_epoch = first.history.back().train_loss;
  const double reduction = (initial - final_epoch) / std::abs(initial);
  EXPECT_LE(first.step_losses.size(), 200u);
  EXPECT_GE(reduction, 0.5);
  const bool deterministic = first.step_losses == second.step_losses;
  EXPECT_TRUE(deterministic);
  std::string note = std::to_string(first.step_losses.size()) + " steps, loss " + fmt(initial) + " -> " +
                     fmt(final_epoch) + " (reduction " + fmt(100 * reduction) + "%, need >= 50%), rerun " +
                     (deterministic ? "bit-identical" : "differs");
  expect_within_budget(start, 600, note);
  detail(note);
}

TEST(Acceptance, C08_ConstantsFidelity) {
  const auto start = Clock::now();
  const Settings s;
  EXPECT_EQ(s.sim.c_pos, 0.09);
  EXPECT_EQ(s.sim.c_neg, 0.09);
  EXPECT_EQ(s.sim.refractory_us, 3000);
  EXPECT_EQ(s.loss.alpha1, 0.5);
  EXPECT_EQ(s.loss.alpha2, 0.7);
  EXPECT_EQ(s.train.lr, 0.006);
  EXPECT_EQ(s.train.max_epochs, 30u);
  EXPECT_EQ(s.train.early_stop_patience, 3u);
  EXPECT_EQ(s.train.plateau_patience, 1u);
  EXPECT_EQ(s.train.plateau_factor, 0.1);
  EXPECT_EQ(kBinMenu, (std::array<std::size_t, 4>{7, 10, 14, 21}));
  EXPECT_EQ(kNucfBinMs, 100.0);
  EXPECT_EQ(s.voxel().bin_duration_us, 100'000);
  std::string note = "C+=C-=0.09, refractory 3 ms, a1=0.5, a2=0.7, lr 0.006, 30 epochs, patience 3/1, "
                     "factor 0.1, bins {7,10,14,21}, 100 ms";
  expect_within_budget(start, 1, note);
  detail(note);
}

TEST(Acceptance, C09_LossIdentity) {
  const auto start = Clock::now();
  std::mt19937_64 rng(99);
  std::size_t identity_cases = 0, identity_failures = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t w = 2 + rng() % 6, h = 1 + rng() % 6;
    oracle::Grid g(w * h);
    do {
      for (double& v : g) v = static_cast<double>(rng() % 2);
    } while (constant(g));
    const SaliencyMap gm = as_map(w, h, g);
    ++identity_cases;
    if (combined_loss(gm, gm) != -0.5) ++identity_failures;
    // Batched form over [2, 1, h, w] with the same map twice.
    oracle::Grid twice = g;
    twice.insert(twice.end(), g.begin(), g.end());
    Tape tape(false);
    const Tensor gt(Shape{2, 1, h, w}, twice);
    ++identity_cases;
    if (combined_loss(tape.constant(gt), gt).value().item() != -0.5) ++identity_failures;
  }
  EXPECT_EQ(identity_failures, 0u);

  double min_kl = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    // One- and two-pixel maps normalize to identical distributions.
    const std::size_t n = 3 + rng() % 62;
    const auto p = oracle::random_grid(n, rng, 0, 1), q = oracle::random_grid(n, rng, 0, 1);
    min_kl = std::min(min_kl, loss_kl(as_map(n, 1, p), as_map(n, 1, q)));
  }
  EXPECT_GE(min_kl, 0.0);
  std::string note = std::to_string(identity_cases - identity_failures) + "/" + std::to_string(identity_cases) +
                     " exact -alpha1 identities, min KL over 1000 pairs " + fmt(min_kl);
  expect_within_budget(start, 10, note);
  detail(note);
}

TEST(Acceptance, C10_IoRoundTrips) {
  const auto start = Clock::now();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "evsal_acceptance_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(10);
  std::size_t evs_failures = 0, ckpt_failures = 0;
  for (int i = 0; i < 300; ++i) {
    const SensorGeometry g{static_cast<std::uint32_t>(1 + rng() % 2000), static_cast<std::uint32_t>(1 + rng() % 2000)};
    EventStream s{g, {}};
    std::int64_t t = static_cast<std::int64_t>(rng() >> 2) - (std::int64_t{1} << 61);
    const std::size_t n = rng() % 200;
    for (std::size_t k = 0; k < n; ++k) {
      t += static_cast<std::int64_t>(rng() % 1000);
      s.events.push_back({static_cast<std::uint16_t>(rng() % g.width), static_cast<std::uint16_t>(rng() % g.height), t,
                          static_cast<std::int8_t>(rng() % 2 ? 1 : -1)});
    }
    const fs::path p = dir / "s.evs";
    write_events(s, p);
    if (!(read_events(p) == s) || encode_events(read_events(p)) != encode_events(s)) ++evs_failures;

    std::vector<CheckpointRecord> recs;
    const std::size_t nrec = rng() % 8;
    for (std::size_t r = 0; r < nrec; ++r) {
      Shape shape(rng() % 5);
      for (auto& d : shape) d = 1 + rng() % 5;
      Tensor v(shape);
      for (double& x : v.data()) {
        const std::uint64_t bits = rng();
        std::memcpy(&x, &bits, sizeof x);
        if (!std::isfinite(x)) x = -0.0;
      }
      recs.push_back({"param." + std::to_string(r), std::move(v)});
    }
    save_checkpoint(recs, dir / "c.ckpt");
    const auto back = load_checkpoint(dir / "c.ckpt");
    bool same = back.size() == recs.size();
    for (std::size_t r = 0; same && r < recs.size(); ++r) {
      same = back[r].name == recs[r].name && bitwise_equal(back[r].value, recs[r].value);
    }
    if (!same) ++ckpt_failures;
  }
  // A real model's records as well.
  SestModel m(ModelConfig{}, 3);
  save_checkpoint(m.records(), dir / "model.ckpt");
  const auto back = load_checkpoint(dir / "model.ckpt");
  bool model_same = back.size() == m.records().size();
  for (std::size_t r = 0; model_same && r < back.size(); ++r) {
    model_same = bitwise_equal(back[r].value, m.records()[r].value);
  }
  EXPECT_TRUE(model_same);
  fs::remove_all(dir);
  EXPECT_EQ(evs_failures, 0u);
  EXPECT_EQ(ckpt_failures, 0u);
  std::string note = "300 EVS1 + 300 checkpoint file round trips, failures " + std::to_string(evs_failures) + "/" +
                     std::to_string(ckpt_failures) + ", model checkpoint " + (model_same ? "bit-exact" : "differs");
  expect_within_budget(start, 30, note);
  detail(note);
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  auto& listeners = ::testing::UnitTest::GetInstance()->listeners();
  delete listeners.Release(listeners.default_result_printer());
  listeners.Append(new LinePrinter);
  const int rc = RUN_ALL_TESTS();
  const auto* unit = ::testing::UnitTest::GetInstance();
  std::cout << unit->successful_test_count() << "/" << unit->total_test_count() << " criteria passed" << std::endl;
  return rc;
}
