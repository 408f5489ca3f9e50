#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "evsal/error.hpp"
#include "evsal/metrics.hpp"
#include "oracles.hpp"

using namespace evsal;

namespace {

SaliencyMap map_of(std::size_t w, std::size_t h, std::vector<double> v) { return {w, h, std::move(v)}; }

FixationSet fixations(const SaliencyMap& m, const std::vector<std::size_t>& flat) {
  std::vector<std::pair<std::size_t, std::size_t>> xy;
  for (std::size_t f : flat) xy.emplace_back(f % m.width, f / m.width);
  return FixationSet({static_cast<std::uint32_t>(m.width), static_cast<std::uint32_t>(m.height)}, xy);
}

std::vector<std::size_t> random_subset(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return idx;
}

}  // namespace

TEST(Normalize, Examples) {
  const SaliencyMap u = normalize_to_distribution(map_of(3, 2, std::vector<double>(6, 4.2)));
  for (double v : u.values) EXPECT_NEAR(v, 1.0 / 6, 1e-15);
  const SaliencyMap d = normalize_to_distribution(map_of(2, 1, {0, 1}), 1e-9);
  EXPECT_NEAR(d.values[0], 0.0, 1e-8);
  EXPECT_NEAR(d.values[1], 1.0, 1e-8);

  std::mt19937_64 rng(1);
  const auto g = oracle::random_grid(16, rng);
  const SaliencyMap r = normalize_to_distribution(map_of(4, 4, g), 1e-9);
  const auto expected = oracle::to_distribution(g, 1e-9);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(r.values[i], expected[i], 1e-15);
}

TEST(Cc, Examples) {
  const SaliencyMap gt = map_of(3, 1, {0.1, 0.7, 0.3});
  EXPECT_NEAR(cc(gt, gt), 1.0, 1e-15);
  SaliencyMap anti = gt;
  for (double& v : anti.values) v = -v + 7;
  EXPECT_NEAR(cc(anti, gt), -1.0, 1e-15);

  std::mt19937_64 rng(2);
  const auto a = oracle::random_grid(25, rng), b = oracle::random_grid(25, rng);
  EXPECT_NEAR(cc(map_of(5, 5, a), map_of(5, 5, b)), oracle::pearson(a, b), 1e-12);
}

TEST(Cc, Errors) {
  const SaliencyMap gt = map_of(2, 1, {0, 1});
  EXPECT_THROW(cc(map_of(2, 1, {3, 3}), gt), Error);
  try {
    cc(map_of(1, 2, {0, 1}), gt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Sim, Examples) {
  const SaliencyMap a = map_of(2, 2, {0.2, 0.5, 0.1, 0.9});
  EXPECT_NEAR(sim(a, a), 1.0, 1e-15);
  EXPECT_NEAR(sim(map_of(2, 1, {1, 0}), map_of(2, 1, {0, 1}), 1e-15), 0.0, 1e-12);

  std::mt19937_64 rng(4);
  const auto x = oracle::random_grid(16, rng), y = oracle::random_grid(16, rng);
  EXPECT_NEAR(sim(map_of(4, 4, x), map_of(4, 4, y)), oracle::similarity(x, y, 1e-9), 1e-12);
}

TEST(Nss, Examples) {
  const SaliencyMap flat = map_of(2, 2, std::vector<double>(4, 0.3));
  EXPECT_EQ(nss(flat, fixations(flat, {1})), 0.0);
  const SaliencyMap two = map_of(2, 1, {0, 2});
  EXPECT_NEAR(nss(two, fixations(two, {1})), 1.0, 1e-15);

  std::mt19937_64 rng(6);
  const auto g = oracle::random_grid(36, rng);
  const SaliencyMap m = map_of(6, 6, g);
  const auto f = random_subset(rng, 36, 5);
  EXPECT_NEAR(nss(m, fixations(m, f)), oracle::nss(g, f), 1e-12);
  EXPECT_THROW(nss(m, fixations(m, {})), Error);
}

TEST(AucJudd, Examples) {
  const SaliencyMap m = map_of(3, 3, {0.1, 0.9, 0.2, 0.3, 0.1, 0.95, 0.0, 0.2, 0.4});
  EXPECT_DOUBLE_EQ(auc_judd(m, fixations(m, {1, 5})), 1.0);
  const SaliencyMap flat = map_of(3, 3, std::vector<double>(9, 0.5));
  EXPECT_DOUBLE_EQ(auc_judd(flat, fixations(flat, {0, 4})), 0.5);

  std::mt19937_64 rng(8);
  const auto g = oracle::random_grid(25, rng);
  const SaliencyMap r = map_of(5, 5, g);
  const auto f = random_subset(rng, 25, 4);
  EXPECT_NEAR(auc_judd(r, fixations(r, f)), oracle::auc_judd(g, f), 1e-12);
}

TEST(AucJudd, Errors) {
  const SaliencyMap m = map_of(2, 1, {0, 1});
  try {
    auc_judd(m, fixations(m, {0, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoNegatives);
  }
  try {
    auc_judd(m, fixations(m, {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyFixations);
  }
  EXPECT_THROW(FixationSet({2, 1}, {{2, 0}}), Error);
}

TEST(AucJudd, TiesWithNegativesCountAgainst) {
  // Fixation value ties with a negative: the threshold admits both.
  const SaliencyMap m = map_of(3, 1, {0.5, 0.5, 0.1});
  // ROC points: (0,0), (0.5,1), (1,1) -> 0.75
  EXPECT_DOUBLE_EQ(auc_judd(m, fixations(m, {0})), 0.75);
}

TEST(EvaluateAll, Examples) {
  const SaliencyMap gt = map_of(3, 2, {0.1, 0.2, 0.9, 0.3, 0.8, 0.4});
  const FixationSet fix = fixations(gt, {2});
  const MetricReport self = evaluate_all(gt, gt, fix);
  EXPECT_DOUBLE_EQ(*self.auc_j, 1.0);
  EXPECT_NEAR(*self.cc, 1.0, 1e-15);
  EXPECT_NEAR(*self.sim, 1.0, 1e-15);
  EXPECT_NEAR(*self.nss, oracle::nss(gt.values, {2}), 1e-15);

  const SaliencyMap flat = map_of(3, 2, std::vector<double>(6, 0.4));
  const MetricReport deg = evaluate_all(flat, gt, fix);
  EXPECT_DOUBLE_EQ(*deg.auc_j, 0.5);
  EXPECT_FALSE(deg.cc.has_value());
  EXPECT_NEAR(*deg.sim, oracle::similarity(flat.values, gt.values, 1e-9), 1e-15);
  EXPECT_EQ(*deg.nss, 0.0);
}

TEST(EvaluateAll, RandomInstancesMatchOracles) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto p = oracle::random_grid(20, rng, 0, 1), g = oracle::random_grid(20, rng, 0, 1);
    const SaliencyMap pm = map_of(5, 4, p), gm = map_of(5, 4, g);
    const auto f = random_subset(rng, 20, 1 + rng() % 10);
    const MetricReport r = evaluate_all(pm, gm, fixations(pm, f));
    EXPECT_NEAR(*r.auc_j, oracle::auc_judd(p, f), 1e-12);
    EXPECT_NEAR(*r.cc, oracle::pearson(p, g), 1e-12);
    EXPECT_NEAR(*r.sim, oracle::similarity(p, g, 1e-9), 1e-12);
    EXPECT_NEAR(*r.nss, oracle::nss(p, f), 1e-12);
  }
}

TEST(Metrics, Invariances) {
  std::mt19937_64 rng(12);
  const auto p = oracle::random_grid(30, rng), g = oracle::random_grid(30, rng);
  const SaliencyMap pm = map_of(6, 5, p), gm = map_of(6, 5, g);
  const FixationSet fix = fixations(pm, random_subset(rng, 30, 6));
  SaliencyMap affine = pm;
  for (double& v : affine.values) v = 3 * v + 11;
  EXPECT_NEAR(cc(affine, gm), cc(pm, gm), 1e-12);
  EXPECT_NEAR(nss(affine, fix), nss(pm, fix), 1e-12);
  EXPECT_DOUBLE_EQ(auc_judd(affine, fix), auc_judd(pm, fix));
  EXPECT_NEAR(cc(pm, gm), cc(gm, pm), 1e-15);
  EXPECT_NEAR(sim(pm, gm), sim(gm, pm), 1e-15);
}
