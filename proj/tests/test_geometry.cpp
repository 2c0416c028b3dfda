#include <gtest/gtest.h>

#include <Eigen/LU>
#include <random>

#include "eanet/errors.hpp"
#include "eanet/geometry.hpp"

namespace eanet {
namespace {

// Pixel-counting IoU for integer boxes, written independently of iou().
double iou_by_counting(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
  long inter = 0;
  for (int y = std::min(ay, by); y < std::max(ay + ah, by + bh); ++y) {
    for (int x = std::min(ax, bx); x < std::max(ax + aw, bx + bw); ++x) {
      const bool in_a = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
      const bool in_b = x >= bx && x < bx + bw && y >= by && y < by + bh;
      inter += in_a && in_b;
    }
  }
  const long uni = static_cast<long>(aw) * ah + static_cast<long>(bw) * bh - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

TEST(Iou, AnalyticCases) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 10, 10}), 1.0 / 3.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {10, 0, 10, 10}), 0.0);
}

TEST(Iou, SymmetricBoundedAndMatchesPixelCount) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pos(0, 30), ext(1, 20);
  for (int i = 0; i < 1000; ++i) {
    const int ax = pos(rng), ay = pos(rng), aw = ext(rng), ah = ext(rng);
    const int bx = pos(rng), by = pos(rng), bw = ext(rng), bh = ext(rng);
    const BoundingBox a{double(ax), double(ay), double(aw), double(ah)};
    const BoundingBox b{double(bx), double(by), double(bw), double(bh)};
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, iou_by_counting(ax, ay, aw, ah, bx, by, bw, bh), 1e-12);
  }
}

TEST(CenterDistance, AnalyticCases) {
  EXPECT_DOUBLE_EQ(center_distance({4, 4, 3, 3}, {4, 4, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(center_distance({0, 0, 10, 10}, {3, 4, 10, 10}), 5.0);
  EXPECT_DOUBLE_EQ(center_distance({0, 0, 2, 2}, {0, 2, 2, 2}), 2.0);
  EXPECT_DOUBLE_EQ(center_distance({3, 4, 10, 10}, {0, 0, 10, 10}), 5.0);
}

TEST(BoundingBox, Validity) {
  EXPECT_TRUE(BoundingBox({0, 0, 1, 1}).valid());
  EXPECT_FALSE(BoundingBox({0, 0, 0, 1}).valid());
  EXPECT_FALSE(BoundingBox({0, 0, 1, -1}).valid());
  EXPECT_FALSE(BoundingBox({std::nan(""), 0, 1, 1}).valid());
}

TEST(ClipToImage, KeepsBoxInsideAndShrinksOversized) {
  const ImageSize img{100, 50};
  const auto a = clip_to_image({-10, -10, 20, 20}, img);
  EXPECT_DOUBLE_EQ(a.x, 0);
  EXPECT_DOUBLE_EQ(a.y, 0);
  const auto b = clip_to_image({0, 0, 300, 300}, img);
  EXPECT_DOUBLE_EQ(b.w, 100);
  EXPECT_DOUBLE_EQ(b.h, 50);
  const auto c = clip_to_image({95, 45, 10, 10}, img);
  EXPECT_DOUBLE_EQ(c.right(), 100);
  EXPECT_DOUBLE_EQ(c.bottom(), 50);
}

TEST(GaussianSample, EmptyRequest) {
  EXPECT_TRUE(gaussian_sample({10, 10, 5, 5}, {0, 0.3, 0.1, 1}, {50, 50}).empty());
}

TEST(GaussianSample, ZeroNoiseCopiesCenter) {
  const BoundingBox c{10, 12, 8, 6};
  const auto out = gaussian_sample(c, {3, 0.0, 0.0, 9}, {50, 50});
  ASSERT_EQ(out.size(), 3u);
  for (const auto& b : out) EXPECT_EQ(b, c);
}

TEST(GaussianSample, DeterministicAndInsideBounds) {
  const BoundingBox c{40, 30, 20, 25};
  const SampleSpec spec{500, 0.8, 0.4, 77};
  const ImageSize img{120, 90};
  const auto a = gaussian_sample(c, spec, img);
  const auto b = gaussian_sample(c, spec, img);
  ASSERT_EQ(a.size(), 500u);
  EXPECT_EQ(a, b);
  for (const auto& box : a) {
    EXPECT_GE(box.x, -1e-9);
    EXPECT_GE(box.y, -1e-9);
    EXPECT_LE(box.right(), 120 + 1e-9);
    EXPECT_LE(box.bottom(), 90 + 1e-9);
    EXPECT_TRUE(box.valid());
  }
  auto other = spec;
  other.seed = 78;
  EXPECT_NE(gaussian_sample(c, other, img), a);
}

TEST(SampleByIou, ForcedIdentity) {
  const BoundingBox gt{10, 10, 20, 20};
  const auto out = sample_by_iou(gt, 4, 1.0, 1.0, {0, 0.0, 0.0, 3}, {100, 100});
  ASSERT_EQ(out.size(), 4u);
  for (const auto& b : out) EXPECT_EQ(b, gt);
}

TEST(SampleByIou, EveryBoxWithinBand) {
  const BoundingBox gt{50, 40, 30, 30};
  const SampleSpec spec{0, 0.5, 0.2, 5};
  for (auto [lo, hi] : {std::pair{0.7, 1.0}, std::pair{0.0, 0.5}, std::pair{0.3, 0.6}}) {
    const auto out = sample_by_iou(gt, 200, lo, hi, spec, {160, 120});
    ASSERT_EQ(out.size(), 200u);
    for (const auto& b : out) {
      const double o = iou(b, gt);
      EXPECT_GE(o, lo);
      EXPECT_LE(o, hi);
    }
  }
}

TEST(SampleByIou, ImpossibleBandExhaustsBudget) {
  const BoundingBox gt{50, 40, 30, 30};
  try {
    (void)sample_by_iou(gt, 3, 0.99, 1.0, {0, 5.0, 2.0, 1}, {160, 120});
    FAIL() << "expected SamplingBudgetExhausted";
  } catch (const SamplingBudgetExhausted& e) {
    EXPECT_LT(e.found(), 3u);
  }
}

TEST(SampleByIou, RejectsInvalidBand) {
  const BoundingBox gt{0, 0, 10, 10};
  EXPECT_THROW(sample_by_iou(gt, 1, 0.6, 0.5, {}, {20, 20}), std::invalid_argument);
  EXPECT_THROW(sample_by_iou(gt, 1, -0.1, 0.5, {}, {20, 20}), std::invalid_argument);
  EXPECT_THROW(sample_by_iou(gt, 1, 0.1, 1.5, {}, {20, 20}), std::invalid_argument);
}

TEST(Offsets, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1, 60);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox a{u(rng), u(rng), u(rng), u(rng)}, g{u(rng), u(rng), u(rng), u(rng)};
    const auto back = decode_offsets(a, encode_offsets(a, g));
    EXPECT_NEAR(back.x, g.x, 1e-9);
    EXPECT_NEAR(back.y, g.y, 1e-9);
    EXPECT_NEAR(back.w, g.w, 1e-9);
    EXPECT_NEAR(back.h, g.h, 1e-9);
  }
}

struct LinearData {
  Eigen::MatrixXd features;
  Eigen::MatrixXd weights;
  std::vector<BoundingBox> boxes, gts;
};

// Targets generated from known weights, so the fit must recover them.
LinearData exact_linear(int m, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(10, 50);
  LinearData data;
  data.features = Eigen::MatrixXd(m, d);
  data.weights = Eigen::MatrixXd(d, 4);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) data.features(i, j) = n(rng);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < 4; ++k) data.weights(j, k) = 0.05 * n(rng);
  for (int i = 0; i < m; ++i) {
    const BoundingBox b{u(rng), u(rng), u(rng), u(rng)};
    const Eigen::Vector4d t = (data.features.row(i) * data.weights).transpose();
    data.boxes.push_back(b);
    data.gts.push_back(decode_offsets(b, t));
  }
  return data;
}

TEST(Regressor, IdenticalBoxesGiveIdentity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd f(30, 5);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 5; ++j) f(i, j) = n(rng);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 30; ++i) boxes.push_back({double(i), 5.0, 10.0 + i, 12.0});
  const auto p = regressor_fit(f, boxes, boxes, 1.0);
  for (int i = 0; i < 30; ++i) {
    const auto out = regressor_apply(p, f.row(i).transpose(), boxes[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(out.x, boxes[static_cast<std::size_t>(i)].x, 1e-6);
    EXPECT_NEAR(out.w, boxes[static_cast<std::size_t>(i)].w, 1e-6);
  }
}

TEST(Regressor, RecoversGeneratingWeights) {
  const auto data = exact_linear(60, 6, 4);
  const auto p = regressor_fit(data.features, data.boxes, data.gts, 0.0);
  EXPECT_LT((p.weights - data.weights).cwiseAbs().maxCoeff(), 1e-6);
  for (int i = 0; i < 60; ++i) {
    const auto out = regressor_apply(p, data.features.row(i).transpose(), data.boxes[static_cast<std::size_t>(i)]);
    const auto& g = data.gts[static_cast<std::size_t>(i)];
    EXPECT_NEAR(out.x, g.x, 1e-4);
    EXPECT_NEAR(out.y, g.y, 1e-4);
    EXPECT_NEAR(out.w, g.w, 1e-4);
    EXPECT_NEAR(out.h, g.h, 1e-4);
  }
}

TEST(Regressor, DualFormMatchesPrimalForm) {
  // Fewer samples than features switches to the dual solve; compare with the
  // primal normal equations solved directly.
  const auto data = exact_linear(8, 20, 5);
  const double lambda = 0.5;
  const auto p = regressor_fit(data.features, data.boxes, data.gts, lambda);
  Eigen::MatrixXd targets(8, 4);
  for (int i = 0; i < 8; ++i)
    targets.row(i) = encode_offsets(data.boxes[static_cast<std::size_t>(i)], data.gts[static_cast<std::size_t>(i)]).transpose();
  Eigen::MatrixXd normal = data.features.transpose() * data.features;
  normal.diagonal().array() += lambda;
  const Eigen::MatrixXd w = normal.inverse() * data.features.transpose() * targets;
  EXPECT_LT((p.weights - w).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Regressor, HugeLambdaShrinksWeightsToZero) {
  const auto data = exact_linear(40, 5, 6);
  const auto p = regressor_fit(data.features, data.boxes, data.gts, 1e12);
  EXPECT_LT(p.weights.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Regressor, SingularWithoutRidgeThrows) {
  auto data = exact_linear(20, 4, 7);
  data.features.col(3) = data.features.col(2);
  EXPECT_THROW(regressor_fit(data.features, data.boxes, data.gts, 0.0), std::runtime_error);
  EXPECT_NO_THROW(regressor_fit(data.features, data.boxes, data.gts, 1.0));
}

TEST(Regressor, InputErrors) {
  const auto data = exact_linear(10, 3, 8);
  EXPECT_THROW(regressor_fit(Eigen::MatrixXd(0, 3), {}, {}, 1.0), std::invalid_argument);
  EXPECT_THROW(regressor_fit(data.features, std::span(data.boxes).first(5), data.gts, 1.0), std::invalid_argument);
  EXPECT_THROW(regressor_fit(data.features, data.boxes, data.gts, -1.0), std::invalid_argument);
  const auto p = regressor_fit(data.features, data.boxes, data.gts, 1.0);
  EXPECT_THROW(regressor_apply(p, Eigen::VectorXd::Zero(4), data.boxes[0]), std::invalid_argument);
}

TEST(Regressor, ZeroWeightsAreIdentity) {
  RegressorParams p;
  p.weights = Eigen::MatrixXd::Zero(3, 4);
  const BoundingBox b{3, 4, 5, 6};
  EXPECT_EQ(regressor_apply(p, Eigen::Vector3d(1, 2, 3), b), b);
}

TEST(Regressor, DecodedExtentAlwaysPositive) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 30);
  std::uniform_real_distribution<double> u(0.5, 80);
  RegressorParams p;
  p.weights = Eigen::MatrixXd(4, 4);
  for (int i = 0; i < 1000; ++i) {
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) p.weights(r, c) = n(rng);
    const Eigen::Vector4d f(n(rng), n(rng), n(rng), n(rng));
    const auto out = regressor_apply(p, f, {u(rng), u(rng), u(rng), u(rng)});
    EXPECT_GT(out.w, 0);
    EXPECT_GT(out.h, 0);
  }
}

}  // namespace
}  // namespace eanet
