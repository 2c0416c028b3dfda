#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "eanet/esk.hpp"
#include "eanet/geometry.hpp"
#include "eanet/image.hpp"
#include "eanet/kernels.hpp"
#include "eanet/params.hpp"

namespace eanet {

enum class Modality { Rgb = 0, Tir = 1 };

struct ConvLayerSpec {
  int kernel = 3;
  int stride = 1;
  int out_channels = 1;
  bool pooled = false;
  bool normalized = false;
};

/// Structural hyper-parameters shared by every network module. The defaults
/// are the VGG-M widths; `desk()` is a narrow variant for CPU-only runs.
struct NetworkConfig {
  int patch_size = 107;
  int in_channels = 3;
  std::array<int, 3> channels{96, 256, 512};
  int pool_window = 3;
  int pool_stride = 2;
  LrnSpec lrn{};
  EskShape esk{};
  int fc_width = 512;
  double dropout = 0.5;
  float input_mean = 128.0f;
  float input_scale = 1.0f;  // applied after mean subtraction

  std::array<ConvLayerSpec, 3> layers() const {
    return {ConvLayerSpec{7, 2, channels[0], true, true}, ConvLayerSpec{5, 2, channels[1], true, true},
            ConvLayerSpec{3, 1, channels[2], false, false}};
  }
  /// Spatial extent of the level-3 output for this patch size.
  int final_extent() const;
  /// Length of the concatenated RGB+TIR level-3 feature fed to the head.
  std::size_t feature_dim() const;

  static NetworkConfig desk();
  friend bool operator==(const NetworkConfig& a, const NetworkConfig& b);
};

template <typename T>
struct StreamParams {
  std::array<ConvParams<T>, 3> conv;
};

/// Two independent convolution streams; index 0 is RGB, 1 is TIR.
template <typename T>
struct BackboneParams {
  std::array<StreamParams<T>, 2> streams;

  StreamParams<T>& stream(Modality m) { return streams[static_cast<int>(m)]; }
  const StreamParams<T>& stream(Modality m) const { return streams[static_cast<int>(m)]; }

  /// Both streams start from the same draw, mirroring a shared pre-trained file.
  static BackboneParams init(const NetworkConfig& config, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (int s = 0; s < 2; ++s)
      for (int l = 0; l < 3; ++l) streams[s].conv[l].visit(prefix + stream_name(s) + ".conv" + std::to_string(l + 1), f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    for (int s = 0; s < 2; ++s)
      for (int l = 0; l < 3; ++l) streams[s].conv[l].visit(prefix + stream_name(s) + ".conv" + std::to_string(l + 1), f);
  }
  static const char* stream_name(int s) { return s == 0 ? ".rgb" : ".tir"; }
};

struct PatchOptions {
  int size = 107;
  double context_scale = 1.0;
  float mean = 0.0f;  // subtracted from every sample
  float scale = 1.0f; // then multiplied in
};

/// Bilinear crop of `box` (scaled about its center by context_scale) into a
/// [C, size, size] tensor. Samples whose position falls outside the image
/// area read as zero (before mean subtraction). Throws when the crop region
/// does not overlap the image.
Tensor<float> extract_patch(const Image& image, const BoundingBox& box, const PatchOptions& options);

/// Cache for the LRN + max-pool stage of one layer.
template <typename T>
struct PostCache {
  Tensor<T> input;
  Tensor<T> lrn_scale;
  Tensor<T> normalized;
  std::vector<std::uint32_t> argmax;
};

/// Convolution followed by ReLU (the part of a layer that precedes fusion).
template <typename T>
Tensor<T> conv_relu_forward(const Tensor<T>& input, const ConvLayerSpec& layer, const ConvParams<T>& params);

/// Gradient through ReLU + conv; `relu_out` is the forward output.
template <typename T>
Tensor<T> conv_relu_backward(const Tensor<T>& input, const Tensor<T>& relu_out, const ConvLayerSpec& layer,
                             const ConvParams<T>& params, const Tensor<T>& d_out, ConvParams<T>* grads,
                             bool need_input_grad = true);

/// Optional LRN then optional max-pool, per the layer spec.
template <typename T>
Tensor<T> post_forward(const Tensor<T>& x, const ConvLayerSpec& layer, const NetworkConfig& config,
                       PostCache<T>* cache);

template <typename T>
Tensor<T> post_backward(const PostCache<T>& cache, const ConvLayerSpec& layer, const NetworkConfig& config,
                        const Tensor<T>& d_out);

/// Full backbone layer: conv, ReLU, then LRN and pooling where specified.
template <typename T>
Tensor<T> conv_layer_forward(const Tensor<T>& input, const ConvLayerSpec& layer, const ConvParams<T>& params,
                             const NetworkConfig& config);

/// The three layer outputs of one modality's stream (no fusion).
template <typename T>
std::array<Tensor<T>, 3> stream_forward(const Tensor<T>& patch, Modality modality,
                                        const BackboneParams<T>& params, const NetworkConfig& config);

}  // namespace eanet
