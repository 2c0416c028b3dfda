#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "eanet/backbone.hpp"
#include "test_util.hpp"

namespace eanet::test {
namespace {

TEST(LayerTable, MatchesVggMPlan) {
  const NetworkConfig net;
  const auto layers = net.layers();
  const int kernels[3] = {7, 5, 3}, strides[3] = {2, 2, 1}, widths[3] = {96, 256, 512};
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(layers[l].kernel, kernels[l]);
    EXPECT_EQ(layers[l].stride, strides[l]);
    EXPECT_EQ(layers[l].out_channels, widths[l]);
    EXPECT_EQ(layers[l].pooled, l < 2);
    EXPECT_EQ(layers[l].normalized, l < 2);
  }
  EXPECT_EQ(net.final_extent(), 3);
  EXPECT_EQ(net.feature_dim(), 9216u);
  EXPECT_EQ(NetworkConfig::desk().feature_dim(), 2u * 16 * 3 * 3);
}

TEST(Stream, ShapeChainFor107Patch) {
  const NetworkConfig net;
  Rng rng(1);
  const auto params = BackboneParams<float>::init(net, rng);
  const auto patch = random_tensor<float>({3, 107, 107}, rng);
  const auto pre = conv_relu_forward(patch, net.layers()[0], params.stream(Modality::Rgb).conv[0]);
  EXPECT_EQ(pre.shape(), (std::vector<std::size_t>{96, 51, 51}));
  const auto out = stream_forward(patch, Modality::Rgb, params, net);
  EXPECT_EQ(out[0].shape(), (std::vector<std::size_t>{96, 25, 25}));
  EXPECT_EQ(out[1].shape(), (std::vector<std::size_t>{256, 5, 5}));
  EXPECT_EQ(out[2].shape(), (std::vector<std::size_t>{512, 3, 3}));
  for (const auto& t : out)
    for (float v : t.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Stream, PerturbingRgbLeavesTirBitIdentical) {
  const NetworkConfig net = NetworkConfig::desk();
  Rng rng(2);
  auto params = BackboneParams<float>::init(net, rng);
  const auto patch = random_tensor<float>({3, 107, 107}, rng);
  const auto before = stream_forward(patch, Modality::Tir, params, net);
  for (auto& conv : params.stream(Modality::Rgb).conv) {
    for (auto& v : conv.weight.values()) v += 0.5f;
    for (auto& v : conv.bias.values()) v -= 0.25f;
  }
  const auto after = stream_forward(patch, Modality::Tir, params, net);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(as_vector(before[l]), as_vector(after[l]));
  const auto rgb_after = stream_forward(patch, Modality::Rgb, params, net);
  EXPECT_NE(as_vector(rgb_after[2]), as_vector(after[2]));
}

TEST(Stream, BothStreamsStartFromTheSameDraw) {
  Rng rng(3);
  const auto params = BackboneParams<double>::init(NetworkConfig::desk(), rng);
  for (int l = 0; l < 3; ++l)
    EXPECT_EQ(as_vector(params.stream(Modality::Rgb).conv[l].weight),
              as_vector(params.stream(Modality::Tir).conv[l].weight));
}

TEST(ConvLayer, ZeroInputAndBiasGiveZero) {
  const NetworkConfig net = NetworkConfig::desk();
  Rng rng(4);
  auto params = BackboneParams<double>::init(net, rng);
  for (int l = 0; l < 3; ++l) params.stream(Modality::Rgb).conv[l].bias.fill(0);
  const Tensor<double> zero({3, 107, 107});
  const auto out = stream_forward(zero, Modality::Rgb, params, net);
  for (const auto& t : out)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvLayer, RejectsBadInputs) {
  const NetworkConfig net = NetworkConfig::desk();
  Rng rng(5);
  const auto params = BackboneParams<float>::init(net, rng);
  const auto& conv = params.stream(Modality::Rgb).conv[0];
  EXPECT_THROW(conv_layer_forward(Tensor<float>({3, 6, 6}), net.layers()[0], conv, net), std::invalid_argument);
  EXPECT_THROW(conv_layer_forward(Tensor<float>({2, 20, 20}), net.layers()[0], conv, net), std::invalid_argument);
  // 9x9 survives the convolution (2x2) but not the 3x3 pool.
  EXPECT_THROW(conv_layer_forward(Tensor<float>({3, 9, 9}), net.layers()[0], conv, net), std::invalid_argument);
}

TEST(ConvLayer, PoolTakesMaxOverLrnOutput) {
  NetworkConfig net = NetworkConfig::desk();
  net.lrn.alpha = 0;  // LRN reduces to division by k^beta
  Rng rng(6);
  const ConvLayerSpec spec{3, 1, 2, true, true};
  auto x = random_tensor<double>({2, 5, 5}, rng);
  for (auto& v : x.values()) v = std::abs(v);
  const auto y = post_forward<double>(x, spec, net, nullptr);
  ASSERT_EQ(y.shape(), (std::vector<std::size_t>{2, 2, 2}));
  const double norm = std::pow(net.lrn.k, net.lrn.beta);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double mx = 0;
        for (std::size_t u = 0; u < 3; ++u)
          for (std::size_t v = 0; v < 3; ++v) mx = std::max(mx, x.at(c, 2 * i + u, 2 * j + v));
        EXPECT_NEAR(y.at(c, i, j), mx / norm, 1e-12);
      }
}

Image ramp_image(int w, int h) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>((c + 1) * x + 3 * y + 5 * c);
  return img;
}

double ramp_value(double x, double y, int c) { return (c + 1) * x + 3 * y + 5 * c; }

TEST(ExtractPatch, FullFrameMatchesOpenCvResize) {
  Rng rng(7);
  Image img(37, 23, 3);
  std::uniform_real_distribution<float> u(0, 255);
  for (auto& v : img.pixels) v = u(rng);
  const auto patch = extract_patch(img, BoundingBox{0, 0, 37, 23}, PatchOptions{107, 1.0, 0.0f, 1.0f});
  cv::Mat src(23, 37, CV_32FC3, img.pixels.data()), dst;
  cv::resize(src, dst, cv::Size(107, 107), 0, 0, cv::INTER_LINEAR);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 107; ++i)
      for (int j = 0; j < 107; ++j) ASSERT_NEAR(patch.at(c, i, j), dst.at<cv::Vec3f>(i, j)[c], 1e-3);
}

TEST(ExtractPatch, ConstantImageGivesConstantPatch) {
  const Image img(50, 40, 3, 77.0f);
  for (double scale : {0.5, 1.0, 1.5}) {
    const auto patch = extract_patch(img, BoundingBox{10.3, 7.9, 21.4, 13.2}, PatchOptions{107, scale, 0.0f, 1.0f});
    for (float v : patch.values()) ASSERT_FLOAT_EQ(v, 77.0f);
  }
}

TEST(ExtractPatch, RampCropMatchesAnalyticBilinear) {
  const Image img = ramp_image(60, 45);
  const BoundingBox box{8.3, 6.1, 20.7, 15.2};
  for (double context : {1.0, 1.6}) {
    const PatchOptions opts{107, context, 10.0f, 1.0f / 255.0f};
    const auto patch = extract_patch(img, box, opts);
    const double cw = box.w * context, ch = box.h * context;
    const double x0 = box.center_x() - cw / 2, y0 = box.center_y() - ch / 2;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 107; ++i)
        for (int j = 0; j < 107; ++j) {
          const double sx = x0 + (j + 0.5) * cw / 107 - 0.5;
          const double sy = y0 + (i + 0.5) * ch / 107 - 0.5;
          const double want = (ramp_value(sx, sy, c) - 10.0) / 255.0;
          ASSERT_NEAR(patch.at(c, i, j), want, 1e-5) << c << " " << i << " " << j;
        }
  }
}

TEST(ExtractPatch, OutsideAreaReadsAsZeroBeforeNormalization) {
  const Image img(20, 20, 1, 100.0f);
  const auto patch = extract_patch(img, BoundingBox{10, 10, 20, 20}, PatchOptions{10, 1.0, 50.0f, 0.5f});
  EXPECT_FLOAT_EQ(patch.at(0, 0, 0), 25.0f);   // inside: (100 - 50) / 2
  EXPECT_FLOAT_EQ(patch.at(0, 9, 9), -25.0f);  // outside: (0 - 50) / 2
}

TEST(ExtractPatch, RejectsBoxesThatMissTheImage) {
  const Image img(20, 20, 3);
  EXPECT_THROW(extract_patch(img, BoundingBox{25, 0, 5, 5}, PatchOptions{}), std::invalid_argument);
  EXPECT_THROW(extract_patch(img, BoundingBox{-10, -10, 10, 10}, PatchOptions{}), std::invalid_argument);
  EXPECT_THROW(extract_patch(img, BoundingBox{5, 5, 0, 5}, PatchOptions{}), std::invalid_argument);
  EXPECT_THROW(extract_patch(Image{}, BoundingBox{0, 0, 5, 5}, PatchOptions{}), std::invalid_argument);
}

}  // namespace
}  // namespace eanet::test
