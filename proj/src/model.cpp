#include "eanet/model.hpp"

#include <stdexcept>

namespace eanet {

std::string_view variant_name(Variant v) { return v == Variant::AggEsk ? "agg-esk" : "sum"; }

std::optional<Variant> parse_variant(std::string_view name) {
  if (name == "agg-esk") return Variant::AggEsk;
  if (name == "sum") return Variant::Sum;
  return std::nullopt;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const NetworkConfig& config, Variant variant, std::size_t domains,
                                    std::uint64_t seed) {
  Rng rng(seed);
  ModelParams m;
  m.config = config;
  m.backbone = BackboneParams<T>::init(config, rng);
  for (int l = 0; l < 3; ++l) {
    const auto c = static_cast<std::size_t>(config.channels[l]);
    for (auto& b : m.fusion[l].branches) b = BranchParams<T>::init(c, config.esk, rng);
    if (variant == Variant::AggEsk) m.fusion[l].aggregation = EskParams<T>::init(c, kAttributeCount, config.esk, rng);
  }
  m.head = HeadParams<T>::init(config.feature_dim(), static_cast<std::size_t>(config.fc_width), domains,
                               config.dropout, rng);
  return m;
}

template <typename T>
Tensor<T> extract_features(const Tensor<T>& rgb_patch, const Tensor<T>& tir_patch, const ModelParams<T>& model,
                           const FusionOptions& fusion, ForwardCache<T>* cache) {
  FusedLayerOutput<T> cur{rgb_patch, tir_patch};
  for (int l = 0; l < 3; ++l) {
    cur = fused_layer_forward(cur.rgb, cur.tir, l, model.backbone, model.fusion[l], model.config, fusion,
                              cache ? &cache->levels[l] : nullptr);
  }
  return merge_modalities(cur.rgb, cur.tir);
}

template <typename T>
void backward_features(const ForwardCache<T>& cache, const ModelParams<T>& model, const FusionOptions& fusion,
                       const Tensor<T>& d_feature, const GradientScope& scope, ModelParams<T>* grads) {
  const auto& last = cache.levels[2];
  // Level-3 outputs share the shape of the level-3 conv maps (no pooling).
  const std::vector<std::size_t>& shape = last.rgb_conv.shape();
  const std::size_t half = d_feature.size() / 2;
  FusedLayerOutput<T> d{Tensor<T>(shape), Tensor<T>(shape)};
  if (d.rgb.size() != half) throw std::invalid_argument("backward_features: feature size mismatch");
  std::copy_n(d_feature.data(), half, d.rgb.data());
  std::copy_n(d_feature.data() + half, half, d.tir.data());
  for (int l = 2; l >= 0; --l) {
    GradientScope level_scope = scope;
    level_scope.input = l > 0 || scope.input;
    FusedLayerGrads<T> g{grads ? &grads->backbone : nullptr, grads ? &grads->fusion[l] : nullptr};
    d = fused_layer_backward(cache.levels[l], l, model.backbone, model.fusion[l], model.config, fusion, d.rgb, d.tir,
                             level_scope, g);
    if (l > 0 && d.rgb.empty()) return;
  }
}

PatchPair extract_patch_pair(const FramePair& frame, const BoundingBox& box, const NetworkConfig& config) {
  const PatchOptions opts{config.patch_size, 1.0, config.input_mean, config.input_scale};
  return {extract_patch(frame.rgb, box, opts), extract_patch(frame.tir, box, opts)};
}

#define EANET_INSTANTIATE(T)                                                                                   \
  template struct ModelParams<T>;                                                                              \
  template Tensor<T> extract_features(const Tensor<T>&, const Tensor<T>&, const ModelParams<T>&,              \
                                      const FusionOptions&, ForwardCache<T>*);                                 \
  template void backward_features(const ForwardCache<T>&, const ModelParams<T>&, const FusionOptions&,         \
                                  const Tensor<T>&, const GradientScope&, ModelParams<T>*);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace eanet
