#include "eanet/fusion.hpp"

#include <stdexcept>

namespace eanet {

std::string_view attribute_name(AttributeId id) {
  switch (id) {
    case AttributeId::ThermalCrossover: return "TC";
    case AttributeId::IlluminationVariation: return "IV";
    case AttributeId::ScaleVariation: return "SV";
    case AttributeId::Occlusion: return "OCC";
    case AttributeId::FastMotion: return "FM";
  }
  return "?";
}

std::optional<AttributeId> parse_attribute(std::string_view name) {
  for (auto a : kAllAttributes)
    if (attribute_name(a) == name) return a;
  return std::nullopt;
}

template <typename T>
BranchParams<T> BranchParams<T>::init(std::size_t channels, const EskShape& shape, Rng& rng) {
  BranchParams p;
  p.conv5 = ConvParams<T>::he_normal(channels, 2 * channels, 5, 5, rng);
  p.conv4 = ConvParams<T>::he_normal(channels, channels, 4, 4, rng);
  p.esk = EskParams<T>::init(channels, 2, shape, rng);
  return p;
}

namespace {

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  a.check_same(b, "branch_forward");
  Tensor<T> out({2 * a.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

}  // namespace

template <typename T>
Tensor<T> branch_forward(const Tensor<T>& rgb, const Tensor<T>& tir, const BranchParams<T>& params,
                         BranchCache<T>* cache) {
  if (rgb.rank() != 3) throw std::invalid_argument("branch_forward: expected [C,H,W]");
  Tensor<T> input = concat_channels(rgb, tir);
  Tensor<T> hidden = kernels::relu_forward(
      kernels::conv2d_forward(input, params.conv5.weight, params.conv5.bias, 1, kBranchPad5));
  Tensor<T> refined = kernels::conv2d_forward(hidden, params.conv4.weight, params.conv4.bias, 1, kBranchPad4);
  const std::array<Tensor<T>, 2> candidates{hidden, refined};
  EskOutput<T> sel = esk_select<T>(candidates, params.esk, cache ? &cache->esk : nullptr);
  if (cache) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->refined = std::move(refined);
  }
  return std::move(sel.selected);
}

template <typename T>
void branch_backward(const BranchCache<T>& cache, const BranchParams<T>& params, const Tensor<T>& d_out,
                     Tensor<T>* d_rgb, Tensor<T>* d_tir, BranchParams<T>* grads) {
  std::vector<Tensor<T>> d_cand = esk_backward(cache.esk, params.esk, d_out, grads ? &grads->esk : nullptr);
  Tensor<T> d_hidden = std::move(d_cand[0]);
  Tensor<T> d_from_refined;
  kernels::conv2d_backward(cache.hidden, params.conv4.weight, 1, kBranchPad4, d_cand[1], &d_from_refined,
                           grads ? &grads->conv4.weight : nullptr, grads ? &grads->conv4.bias : nullptr);
  d_hidden += d_from_refined;
  const Tensor<T> d_pre = kernels::relu_backward(cache.hidden, d_hidden);
  const bool need_input = d_rgb || d_tir;
  if (!need_input && !grads) return;
  Tensor<T> d_input;
  kernels::conv2d_backward(cache.input, params.conv5.weight, 1, kBranchPad5, d_pre, need_input ? &d_input : nullptr,
                           grads ? &grads->conv5.weight : nullptr, grads ? &grads->conv5.bias : nullptr);
  if (!need_input) return;
  const std::size_t half = d_input.size() / 2;
  const std::vector<std::size_t> shape{d_input.dim(0) / 2, d_input.dim(1), d_input.dim(2)};
  if (d_rgb) {
    *d_rgb = Tensor<T>(shape);
    std::copy_n(d_input.data(), half, d_rgb->data());
  }
  if (d_tir) {
    *d_tir = Tensor<T>(shape);
    std::copy_n(d_input.data() + half, half, d_tir->data());
  }
}

template <typename T>
EskOutput<T> aggregate(std::span<const Tensor<T>> branch_outputs, const EskParams<T>& params, EskCache<T>* cache) {
  if (branch_outputs.size() != kAttributeCount) {
    throw std::invalid_argument("aggregate: expected 5 branch outputs, got " + std::to_string(branch_outputs.size()));
  }
  return esk_select(branch_outputs, params, cache);
}

template <typename T>
FusedLayerOutput<T> fused_layer_forward(const Tensor<T>& rgb_in, const Tensor<T>& tir_in, int level,
                                        const BackboneParams<T>& backbone, const LevelFusionParams<T>& fusion,
                                        const NetworkConfig& config, const FusionOptions& options,
                                        FusedLayerCache<T>* cache) {
  if (level < 0 || level > 2) throw std::invalid_argument("fused_layer_forward: level must be 0..2");
  const ConvLayerSpec spec = config.layers()[level];
  Tensor<T> rc = conv_relu_forward(rgb_in, spec, backbone.stream(Modality::Rgb).conv[level]);
  Tensor<T> tc = conv_relu_forward(tir_in, spec, backbone.stream(Modality::Tir).conv[level]);

  std::vector<AttributeId> active;
  if (options.mode == FusionMode::SingleBranch) {
    active.push_back(options.branch);
  } else {
    active.assign(kAllAttributes.begin(), kAllAttributes.end());
  }
  std::vector<BranchCache<T>> branch_caches(cache ? active.size() : 0);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    outputs.push_back(branch_forward(rc, tc, fusion.branch(active[i]), cache ? &branch_caches[i] : nullptr));
  }

  Tensor<T> residual;
  switch (options.mode) {
    case FusionMode::Aggregate:
      if (!fusion.aggregation) throw std::invalid_argument("fused_layer_forward: model has no aggregation module");
      residual = aggregate<T>(outputs, *fusion.aggregation, cache ? &cache->aggregation : nullptr).selected;
      break;
    case FusionMode::Mean:
    case FusionMode::Sum: {
      residual = outputs[0];
      for (std::size_t i = 1; i < outputs.size(); ++i) residual += outputs[i];
      if (options.mode == FusionMode::Mean) {
        const T inv = T{1} / static_cast<T>(outputs.size());
        for (auto& v : residual.values()) v *= inv;
      }
      break;
    }
    case FusionMode::SingleBranch:
      residual = std::move(outputs[0]);
      break;
  }

  Tensor<T> rgb_sum = rc;
  rgb_sum += residual;
  Tensor<T> tir_sum = tc;
  tir_sum += residual;

  FusedLayerOutput<T> out;
  out.rgb = post_forward(rgb_sum, spec, config, cache ? &cache->rgb_post : nullptr);
  out.tir = post_forward(tir_sum, spec, config, cache ? &cache->tir_post : nullptr);
  if (cache) {
    cache->rgb_in = rgb_in;
    cache->tir_in = tir_in;
    cache->rgb_conv = std::move(rc);
    cache->tir_conv = std::move(tc);
    cache->branches = std::move(branch_caches);
    cache->active = std::move(active);
  }
  return out;
}

template <typename T>
FusedLayerOutput<T> fused_layer_backward(const FusedLayerCache<T>& cache, int level,
                                         const BackboneParams<T>& backbone, const LevelFusionParams<T>& fusion,
                                         const NetworkConfig& config, const FusionOptions& options,
                                         const Tensor<T>& d_rgb_out, const Tensor<T>& d_tir_out,
                                         const GradientScope& scope, FusedLayerGrads<T> grads) {
  const ConvLayerSpec spec = config.layers()[level];
  Tensor<T> d_rgb_conv = post_backward(cache.rgb_post, spec, config, d_rgb_out);
  Tensor<T> d_tir_conv = post_backward(cache.tir_post, spec, config, d_tir_out);
  Tensor<T> d_residual = d_rgb_conv;
  d_residual += d_tir_conv;

  const std::size_t n = cache.active.size();
  std::vector<Tensor<T>> d_outputs;
  switch (options.mode) {
    case FusionMode::Aggregate:
      d_outputs = esk_backward(cache.aggregation, *fusion.aggregation, d_residual,
                               (grads.fusion && scope.aggregation) ? &*grads.fusion->aggregation : nullptr);
      break;
    case FusionMode::Mean: {
      Tensor<T> d = d_residual;
      const T inv = T{1} / static_cast<T>(n);
      for (auto& v : d.values()) v *= inv;
      d_outputs.assign(n, d);
      break;
    }
    case FusionMode::Sum:
    case FusionMode::SingleBranch:
      d_outputs.assign(n, d_residual);
      break;
  }

  const bool need_stream_grad = scope.backbone || scope.input;
  for (std::size_t i = 0; i < n; ++i) {
    const AttributeId a = cache.active[i];
    BranchParams<T>* bg = (grads.fusion && scope.branches) ? &grads.fusion->branch(a) : nullptr;
    if (!need_stream_grad && !bg) continue;
    Tensor<T> dr, dt;
    branch_backward(cache.branches[i], fusion.branch(a), d_outputs[i], need_stream_grad ? &dr : nullptr,
                    need_stream_grad ? &dt : nullptr, bg);
    if (need_stream_grad) {
      d_rgb_conv += dr;
      d_tir_conv += dt;
    }
  }

  FusedLayerOutput<T> d_in;
  if (!need_stream_grad) return d_in;
  auto* bb = (grads.backbone && scope.backbone) ? grads.backbone : nullptr;
  d_in.rgb = conv_relu_backward(cache.rgb_in, cache.rgb_conv, spec, backbone.stream(Modality::Rgb).conv[level],
                                d_rgb_conv, bb ? &bb->stream(Modality::Rgb).conv[level] : nullptr, scope.input);
  d_in.tir = conv_relu_backward(cache.tir_in, cache.tir_conv, spec, backbone.stream(Modality::Tir).conv[level],
                                d_tir_conv, bb ? &bb->stream(Modality::Tir).conv[level] : nullptr, scope.input);
  return d_in;
}

#define EANET_INSTANTIATE(T)                                                                                  \
  template struct BranchParams<T>;                                                                            \
  template Tensor<T> branch_forward(const Tensor<T>&, const Tensor<T>&, const BranchParams<T>&,              \
                                    BranchCache<T>*);                                                         \
  template void branch_backward(const BranchCache<T>&, const BranchParams<T>&, const Tensor<T>&, Tensor<T>*, \
                                Tensor<T>*, BranchParams<T>*);                                                \
  template EskOutput<T> aggregate(std::span<const Tensor<T>>, const EskParams<T>&, EskCache<T>*);            \
  template FusedLayerOutput<T> fused_layer_forward(const Tensor<T>&, const Tensor<T>&, int,                  \
                                                   const BackboneParams<T>&, const LevelFusionParams<T>&,     \
                                                   const NetworkConfig&, const FusionOptions&,                \
                                                   FusedLayerCache<T>*);                                      \
  template FusedLayerOutput<T> fused_layer_backward(const FusedLayerCache<T>&, int, const BackboneParams<T>&, \
                                                    const LevelFusionParams<T>&, const NetworkConfig&,        \
                                                    const FusionOptions&, const Tensor<T>&, const Tensor<T>&, \
                                                    const GradientScope&, FusedLayerGrads<T>);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace eanet
