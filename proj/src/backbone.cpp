#include "eanet/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eanet {

int NetworkConfig::final_extent() const {
  int extent = patch_size;
  for (const auto& l : layers()) {
    extent = window_output(extent, 0, 0, l.kernel, l.stride);
    if (l.pooled) extent = window_output(extent, 0, 0, pool_window, pool_stride);
  }
  return extent;
}

std::size_t NetworkConfig::feature_dim() const {
  const auto e = static_cast<std::size_t>(final_extent());
  return 2 * static_cast<std::size_t>(channels[2]) * e * e;
}

NetworkConfig NetworkConfig::desk() {
  NetworkConfig c;
  c.channels = {4, 8, 16};
  c.fc_width = 64;
  // Randomly initialized streams train better on unit-scale inputs.
  c.input_scale = 1.0f / 128.0f;
  return c;
}

bool operator==(const NetworkConfig& a, const NetworkConfig& b) {
  return a.patch_size == b.patch_size && a.in_channels == b.in_channels && a.channels == b.channels &&
         a.pool_window == b.pool_window && a.pool_stride == b.pool_stride && a.lrn.size == b.lrn.size &&
         a.lrn.alpha == b.lrn.alpha && a.lrn.beta == b.lrn.beta && a.lrn.k == b.lrn.k &&
         a.esk.reduction == b.esk.reduction && a.esk.min_width == b.esk.min_width &&
         a.esk.spatial_kernel == b.esk.spatial_kernel && a.fc_width == b.fc_width &&
         a.dropout == b.dropout && a.input_mean == b.input_mean &&
         a.input_scale == b.input_scale;
}

template <typename T>
BackboneParams<T> BackboneParams<T>::init(const NetworkConfig& config, Rng& rng) {
  BackboneParams p;
  std::size_t in = static_cast<std::size_t>(config.in_channels);
  const auto specs = config.layers();
  for (int l = 0; l < 3; ++l) {
    const auto k = static_cast<std::size_t>(specs[l].kernel);
    const auto out = static_cast<std::size_t>(specs[l].out_channels);
    p.streams[0].conv[l] = ConvParams<T>::he_normal(out, in, k, k, rng);
    in = out;
  }
  p.streams[1] = p.streams[0];
  return p;
}

Tensor<float> extract_patch(const Image& image, const BoundingBox& box, const PatchOptions& options) {
  if (image.empty()) throw std::invalid_argument("extract_patch: empty image");
  if (!box.valid()) throw std::invalid_argument("extract_patch: invalid box");
  const int size = options.size;
  const double cw = box.w * options.context_scale;
  const double ch = box.h * options.context_scale;
  const double x0 = box.center_x() - cw / 2;
  const double y0 = box.center_y() - ch / 2;
  if (x0 >= image.width || y0 >= image.height || x0 + cw <= 0 || y0 + ch <= 0) {
    throw std::invalid_argument("extract_patch: box lies outside the image");
  }
  const int C = image.channels;
  Tensor<float> patch({static_cast<std::size_t>(C), static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  const double sx_step = cw / size;
  const double sy_step = ch / size;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int i = 0; i < size; ++i) {
    const double sy = y0 + (i + 0.5) * sy_step - 0.5;
    const bool row_inside = sy >= -0.5 && sy <= image.height - 0.5;
    const int y_lo = static_cast<int>(std::floor(sy));
    const double fy = sy - y_lo;
    const int ya = std::clamp(y_lo, 0, image.height - 1);
    const int yb = std::clamp(y_lo + 1, 0, image.height - 1);
    for (int j = 0; j < size; ++j) {
      const double sx = x0 + (j + 0.5) * sx_step - 0.5;
      const std::size_t o = static_cast<std::size_t>(i) * size + j;
      if (!row_inside || sx < -0.5 || sx > image.width - 0.5) {
        for (int c = 0; c < C; ++c) patch[c * plane + o] = -options.mean * options.scale;
        continue;
      }
      const int x_lo = static_cast<int>(std::floor(sx));
      const double fx = sx - x_lo;
      const int xa = std::clamp(x_lo, 0, image.width - 1);
      const int xb = std::clamp(x_lo + 1, 0, image.width - 1);
      for (int c = 0; c < C; ++c) {
        const double top = image.at(xa, ya, c) * (1 - fx) + image.at(xb, ya, c) * fx;
        const double bot = image.at(xa, yb, c) * (1 - fx) + image.at(xb, yb, c) * fx;
        patch[c * plane + o] = (static_cast<float>(top * (1 - fy) + bot * fy) - options.mean) * options.scale;
      }
    }
  }
  return patch;
}

template <typename T>
Tensor<T> conv_relu_forward(const Tensor<T>& input, const ConvLayerSpec& layer, const ConvParams<T>& params) {
  return kernels::relu_forward(kernels::conv2d_forward(input, params.weight, params.bias, layer.stride, Padding{}));
}

template <typename T>
Tensor<T> conv_relu_backward(const Tensor<T>& input, const Tensor<T>& relu_out, const ConvLayerSpec& layer,
                             const ConvParams<T>& params, const Tensor<T>& d_out, ConvParams<T>* grads,
                             bool need_input_grad) {
  const Tensor<T> d_pre = kernels::relu_backward(relu_out, d_out);
  Tensor<T> dx;
  kernels::conv2d_backward(input, params.weight, layer.stride, Padding{}, d_pre, need_input_grad ? &dx : nullptr,
                           grads ? &grads->weight : nullptr, grads ? &grads->bias : nullptr);
  return dx;
}

template <typename T>
Tensor<T> post_forward(const Tensor<T>& x, const ConvLayerSpec& layer, const NetworkConfig& config,
                       PostCache<T>* cache) {
  Tensor<T> y = x;
  Tensor<T> scale;
  if (layer.normalized) y = kernels::lrn_forward(x, config.lrn, &scale);
  std::vector<std::uint32_t> argmax;
  Tensor<T> out = layer.pooled ? kernels::maxpool_forward(y, config.pool_window, config.pool_stride, &argmax) : y;
  if (cache) {
    cache->input = x;
    cache->lrn_scale = std::move(scale);
    cache->normalized = std::move(y);
    cache->argmax = std::move(argmax);
  }
  return out;
}

template <typename T>
Tensor<T> post_backward(const PostCache<T>& cache, const ConvLayerSpec& layer, const NetworkConfig& config,
                        const Tensor<T>& d_out) {
  Tensor<T> d = layer.pooled ? kernels::maxpool_backward(d_out, cache.argmax, cache.normalized.shape()) : d_out;
  if (layer.normalized) d = kernels::lrn_backward(cache.input, cache.lrn_scale, config.lrn, d);
  return d;
}

template <typename T>
Tensor<T> conv_layer_forward(const Tensor<T>& input, const ConvLayerSpec& layer, const ConvParams<T>& params,
                             const NetworkConfig& config) {
  return post_forward<T>(conv_relu_forward(input, layer, params), layer, config, nullptr);
}

template <typename T>
std::array<Tensor<T>, 3> stream_forward(const Tensor<T>& patch, Modality modality,
                                        const BackboneParams<T>& params, const NetworkConfig& config) {
  const auto specs = config.layers();
  const auto& stream = params.stream(modality);
  std::array<Tensor<T>, 3> out;
  const Tensor<T>* x = &patch;
  for (int l = 0; l < 3; ++l) {
    out[l] = conv_layer_forward(*x, specs[l], stream.conv[l], config);
    x = &out[l];
  }
  return out;
}

#define EANET_INSTANTIATE(T)                                                                              \
  template struct BackboneParams<T>;                                                                      \
  template Tensor<T> conv_relu_forward(const Tensor<T>&, const ConvLayerSpec&, const ConvParams<T>&);    \
  template Tensor<T> conv_relu_backward(const Tensor<T>&, const Tensor<T>&, const ConvLayerSpec&,        \
                                        const ConvParams<T>&, const Tensor<T>&, ConvParams<T>*, bool);    \
  template Tensor<T> post_forward(const Tensor<T>&, const ConvLayerSpec&, const NetworkConfig&,          \
                                  PostCache<T>*);                                                         \
  template Tensor<T> post_backward(const PostCache<T>&, const ConvLayerSpec&, const NetworkConfig&,      \
                                   const Tensor<T>&);                                                     \
  template Tensor<T> conv_layer_forward(const Tensor<T>&, const ConvLayerSpec&, const ConvParams<T>&,    \
                                        const NetworkConfig&);                                            \
  template std::array<Tensor<T>, 3> stream_forward(const Tensor<T>&, Modality, const BackboneParams<T>&, \
                                                   const NetworkConfig&);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace eanet
