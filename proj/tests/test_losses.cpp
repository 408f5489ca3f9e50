#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evsal/error.hpp"
#include "evsal/losses.hpp"
#include "oracles.hpp"

using namespace evsal;

namespace {

SaliencyMap map_of(std::size_t w, std::size_t h, std::vector<double> v) { return {w, h, std::move(v)}; }

double kl_oracle(const oracle::Grid& pred, const oracle::Grid& gt, double eps) {
  const auto p = oracle::to_distribution(pred, eps), q = oracle::to_distribution(gt, eps);
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += q[i] * std::log(q[i] / p[i]);
  return s;
}

double bce_oracle(const oracle::Grid& pred, const oracle::Grid& gt) {
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s -= gt[i] * std::log(pred[i]) + (1 - gt[i]) * std::log(1 - pred[i]);
  }
  return s / static_cast<double>(pred.size());
}

}  // namespace

TEST(KlLoss, Examples) {
  const SaliencyMap g = map_of(3, 1, {0.2, 0.5, 0.9});
  EXPECT_NEAR(loss_kl(g, g), 0.0, 1e-15);
  // The zero cell shifts to eps on both sides and contributes ~0.
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(expected, 0.5108, 1e-4);
  EXPECT_NEAR(loss_kl(map_of(3, 1, {0, 0.9, 0.1}), map_of(3, 1, {0, 0.5, 0.5})), expected, 1e-7);
}

TEST(KlLoss, NonNegativeAndMatchesOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = oracle::random_grid(12, rng, 0, 1), g = oracle::random_grid(12, rng, 0, 1);
    const double v = loss_kl(map_of(4, 3, p), map_of(4, 3, g));
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, kl_oracle(p, g, 1e-9), 1e-12);
  }
}

TEST(CcLoss, Examples) {
  const SaliencyMap g = map_of(2, 2, {0.1, 0.4, 0.9, 0.3});
  EXPECT_EQ(loss_cc(g, g), -1.0);
  EXPECT_EQ(loss_cc(map_of(2, 2, std::vector<double>(4, 0.5)), g), 0.0);
  std::mt19937_64 rng(2);
  const auto p = oracle::random_grid(9, rng), q = oracle::random_grid(9, rng);
  EXPECT_NEAR(loss_cc(map_of(3, 3, p), map_of(3, 3, q)), -oracle::pearson(p, q), 1e-12);
}

TEST(CcLoss, DegenerateHasZeroGradient) {
  Tape tape;
  const Var p = tape.leaf(Tensor({1, 2, 2}, 0.5));
  const Var l = loss_cc(p, Tensor({1, 2, 2}, {0, 1, 0, 1}));
  tape.backward(l);
  EXPECT_EQ(l.value().item(), 0.0);
  EXPECT_EQ(tape.grad(p), Tensor({1, 2, 2}, 0.0));
}

TEST(BceLoss, Examples) {
  std::mt19937_64 rng(3);
  const auto g = oracle::random_grid(6, rng, 0, 1);
  EXPECT_NEAR(loss_bce(map_of(3, 2, std::vector<double>(6, 0.5)), map_of(3, 2, g)), std::log(2.0), 1e-15);
  const SaliencyMap half = map_of(2, 1, {0.5, 0.5});
  EXPECT_NEAR(loss_bce(half, half), std::log(2.0), 1e-15);
  const auto p = oracle::random_grid(6, rng, 0.01, 0.99);
  EXPECT_NEAR(loss_bce(map_of(3, 2, p), map_of(3, 2, g)), bce_oracle(p, g), 1e-13);
}

TEST(BceLoss, RangeViolation) {
  auto kind = [](const SaliencyMap& p, const SaliencyMap& g) {
    try {
      loss_bce(p, g);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Usage;
  };
  EXPECT_EQ(kind(map_of(2, 1, {1.2, 0.5}), map_of(2, 1, {1, 0})), ErrorKind::RangeViolation);
  EXPECT_EQ(kind(map_of(2, 1, {0.0, 0.5}), map_of(2, 1, {1, 0})), ErrorKind::RangeViolation);
  EXPECT_EQ(loss_bce(map_of(2, 1, {1, 0}), map_of(2, 1, {1, 0})), 0.0);
}

TEST(CombinedLoss, Examples) {
  const SaliencyMap gt = map_of(3, 2, {0, 1, 0, 1, 1, 0});
  EXPECT_EQ(combined_loss(gt, gt), -0.5);

  std::mt19937_64 rng(4);
  const auto p = oracle::random_grid(6, rng, 0.05, 0.95), g = oracle::random_grid(6, rng, 0, 1);
  const SaliencyMap pm = map_of(3, 2, p), gm = map_of(3, 2, g);
  LossWeights kl_only;
  kl_only.alpha1 = kl_only.alpha2 = 0;
  EXPECT_EQ(combined_loss(pm, gm, kl_only), loss_kl(pm, gm));
  EXPECT_NEAR(combined_loss(pm, gm),
              kl_oracle(p, g, 1e-9) - 0.5 * oracle::pearson(p, g) + 0.7 * bce_oracle(p, g), 1e-12);

  LossWeights bad;
  bad.alpha1 = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(CombinedLoss, AveragesOverMaps) {
  std::mt19937_64 rng(5);
  const auto p = oracle::random_grid(2 * 3 * 2 * 2, rng, 0.05, 0.95);
  const auto g = oracle::random_grid(2 * 3 * 2 * 2, rng, 0, 1);
  Tape tape(false);
  const double joint = combined_loss(tape.constant(Tensor({2, 3, 2, 2}, p)), Tensor({2, 3, 2, 2}, g)).value().item();
  double sum = 0;
  for (std::size_t m = 0; m < 6; ++m) {
    sum += combined_loss(map_of(2, 2, {p.begin() + 4 * m, p.begin() + 4 * m + 4}),
                         map_of(2, 2, {g.begin() + 4 * m, g.begin() + 4 * m + 4}));
  }
  EXPECT_NEAR(joint, sum / 6, 1e-13);
}
