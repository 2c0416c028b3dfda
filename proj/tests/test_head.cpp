#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eanet/head.hpp"
#include "test_util.hpp"

namespace eanet::test {
namespace {

RowMatrix<double> random_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0) {
  RowMatrix<double> m(rows, cols);
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TEST(Head, ZeroParametersGiveZeroLogits) {
  Rng rng(1);
  auto head = HeadParams<double>::init(8, 6, 3, 0.5, rng);
  head.visit("", [](const std::string&, Tensor<double>& t) { t.fill(0); });
  const auto logits = head_forward(random_tensor<double>({1, 2, 2}, rng), random_tensor<double>({1, 2, 2}, rng),
                                   head, 2);
  EXPECT_EQ(logits.positive, 0.0);
  EXPECT_EQ(logits.negative, 0.0);
}

TEST(Head, DomainChangesOnlyFc6Contribution) {
  Rng rng(2);
  auto head = HeadParams<double>::init(6, 5, 3, 0.5, rng);
  const auto x = random_rows(4, 6, rng);
  const auto d0 = head_forward(x, head, 0);
  const auto d1 = head_forward(x, head, 1);
  EXPECT_GT((d0 - d1).norm(), 0.0);
  // Perturbing FC6[0] moves domain 0 only.
  for (auto& v : head.fc6[0].weight.values()) v += 0.3;
  EXPECT_GT((head_forward(x, head, 0) - d0).norm(), 0.0);
  EXPECT_EQ(head_forward(x, head, 1), d1);
  // Perturbing a shared layer moves both.
  for (auto& v : head.fc5.bias.values()) v += 0.3;
  EXPECT_NE(head_forward(x, head, 1), d1);
}

TEST(Head, GradientsTouchOnlyTheActiveDomain) {
  Rng rng(3);
  const auto head = HeadParams<double>::init(6, 5, 3, 0.0, rng);
  const auto x = random_rows(4, 6, rng);
  HeadCache<double> cache;
  const auto logits = head_forward(x, head, 1, nullptr, &cache);
  RowMatrix<double> d;
  bce_loss<double>(logits, std::vector<int>{1, 0, 0, 1}, &d);
  auto grads = zeros_like_params(head);
  head_backward(cache, head, d, &grads);
  auto norm = [](const LinearParams<double>& p) {
    double s = 0;
    for (double v : p.weight.values()) s += v * v;
    for (double v : p.bias.values()) s += v * v;
    return s;
  };
  EXPECT_EQ(norm(grads.fc6[0]), 0.0);
  EXPECT_GT(norm(grads.fc6[1]), 0.0);
  EXPECT_EQ(norm(grads.fc6[2]), 0.0);
  EXPECT_GT(norm(grads.fc4), 0.0);
}

TEST(Head, RejectsBadDomainAndWidth) {
  Rng rng(4);
  const auto head = HeadParams<double>::init(6, 5, 2, 0.5, rng);
  EXPECT_THROW(head_forward(random_rows(1, 6, rng), head, 2), std::out_of_range);
  EXPECT_THROW(head_forward(random_rows(1, 7, rng), head, 0), std::invalid_argument);
}

TEST(Head, MergeConcatenatesRgbThenTir) {
  Rng rng(5);
  const auto rgb = random_tensor<float>({2, 3, 3}, rng);
  const auto tir = random_tensor<float>({2, 3, 3}, rng);
  const auto merged = merge_modalities(rgb, tir);
  ASSERT_EQ(merged.size(), 36u);
  for (std::size_t i = 0; i < 18; ++i) {
    EXPECT_EQ(merged[i], rgb[i]);
    EXPECT_EQ(merged[18 + i], tir[i]);
  }
}

TEST(Head, DropoutOnlyWithRngAndScalesKeptUnits) {
  Rng rng(6);
  const auto head = HeadParams<double>::init(6, 200, 1, 0.5, rng);
  const auto x = random_rows(3, 6, rng);
  EXPECT_EQ(head_forward(x, head, 0), head_forward(x, head, 0));
  Rng drop(7);
  HeadCache<double> cache;
  head_forward(x, head, 0, &drop, &cache);
  ASSERT_EQ(cache.mask4.size(), cache.h4.size());
  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < cache.mask4.size(); ++i) {
    const double m = cache.mask4.data()[i];
    EXPECT_TRUE(m == 0.0 || m == 2.0);
    kept += m != 0.0;
  }
  EXPECT_NEAR(double(kept) / double(cache.mask4.size()), 0.5, 0.1);
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  RowMatrix<double> logits = RowMatrix<double>::Zero(3, 2);
  EXPECT_NEAR(bce_loss<double>(logits, std::vector<int>{1, 0, 1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss<double>(logits, std::vector<int>{0, 0, 0}), 0.6931, 1e-4);
}

TEST(CrossEntropy, SaturatesWithoutOverflow) {
  for (double margin : {10.0, 50.0, 1000.0}) {
    RowMatrix<double> logits(2, 2);
    logits << -margin, margin,  // target row
        margin, -margin;        // background row
    RowMatrix<double> d;
    const double loss = bce_loss<double>(logits, std::vector<int>{1, 0}, &d);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_LE(loss, std::exp(-2 * margin) + 1e-300);
    EXPECT_TRUE(d.allFinite());
    // Wrong-way margin: loss grows linearly instead of overflowing.
    EXPECT_NEAR(bce_loss<double>(logits, std::vector<int>{0, 1}), 2 * margin, 1e-9 * margin + 1e-6);
  }
}

TEST(CrossEntropy, MatchesNaiveLogSumExpOracle) {
  Rng rng(8);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = random_rows(64, 2, rng, 3.0);
    std::vector<int> labels(64);
    for (auto& y : labels) y = coin(rng);
    long double total = 0;
    for (int i = 0; i < 64; ++i) {
      const long double p0 = std::exp(static_cast<long double>(logits(i, 0)));
      const long double p1 = std::exp(static_cast<long double>(logits(i, 1)));
      total += -std::log((labels[i] ? p1 : p0) / (p0 + p1));
    }
    EXPECT_NEAR(bce_loss<double>(logits, labels), static_cast<double>(total / 64), 1e-9);
  }
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverBatch) {
  Rng rng(9);
  const auto logits = random_rows(5, 2, rng);
  const std::vector<int> labels{1, 1, 0, 0, 1};
  RowMatrix<double> d;
  bce_loss<double>(logits, labels, &d);
  for (int i = 0; i < 5; ++i) {
    const double z = std::exp(logits(i, 0)) + std::exp(logits(i, 1));
    const double p0 = std::exp(logits(i, 0)) / z, p1 = std::exp(logits(i, 1)) / z;
    EXPECT_NEAR(p0 + p1, 1.0, 1e-9);
    EXPECT_NEAR(d(i, kPositiveColumn), (p1 - (labels[i] == 1)) / 5.0, 1e-12);
    EXPECT_NEAR(d(i, 1 - kPositiveColumn), (p0 - (labels[i] == 0)) / 5.0, 1e-12);
  }
}

TEST(CrossEntropy, RejectsBadInput) {
  RowMatrix<double> logits = RowMatrix<double>::Zero(2, 2);
  EXPECT_THROW(bce_loss<double>(RowMatrix<double>(0, 2), std::vector<int>{}), std::invalid_argument);
  EXPECT_THROW(bce_loss<double>(logits, std::vector<int>{1, 2}), std::invalid_argument);
  EXPECT_THROW(bce_loss<double>(logits, std::vector<int>{1, -1}), std::invalid_argument);
  EXPECT_THROW(bce_loss<double>(logits, std::vector<int>{1}), std::invalid_argument);
  EXPECT_THROW(bce_loss<double>(RowMatrix<double>::Zero(2, 3), std::vector<int>{1, 0}), std::invalid_argument);
}

TEST(HardNegatives, Argmax) {
  const std::vector<double> s{0.1, 0.9, 0.5};
  EXPECT_EQ(hard_negative_mining(s, 1), (std::vector<std::size_t>{1}));
}

TEST(HardNegatives, FullSelectionSortedDescending) {
  const std::vector<double> s{0.1, 0.9, 0.5, 0.9, -2.0};
  EXPECT_EQ(hard_negative_mining(s, 5), (std::vector<std::size_t>{1, 3, 2, 0, 4}));
  EXPECT_TRUE(hard_negative_mining(s, 0).empty());
}

TEST(HardNegatives, MatchesFullSortOracle) {
  Rng rng(10);
  std::uniform_int_distribution<int> coarse(0, 200);  // forces ties
  std::vector<double> s(1000);
  for (auto& v : s) v = coarse(rng) / 10.0;
  std::vector<std::size_t> oracle(s.size());
  std::iota(oracle.begin(), oracle.end(), 0);
  std::stable_sort(oracle.begin(), oracle.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  oracle.resize(128);
  EXPECT_EQ(hard_negative_mining(s, 128), oracle);
}

TEST(HardNegatives, PermutationInvariantUpToTies) {
  Rng rng(11);
  std::vector<double> s(300);
  std::normal_distribution<double> n;
  for (auto& v : s) v = n(rng);
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) shuffled[i] = s[perm[i]];
  const auto a = hard_negative_mining(s, 40);
  const auto b = hard_negative_mining(shuffled, 40);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(a[i], perm[b[i]]);
}

TEST(HardNegatives, RejectsOversizedK) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_THROW(hard_negative_mining(s, 4), std::invalid_argument);
}

}  // namespace
}  // namespace eanet::test
