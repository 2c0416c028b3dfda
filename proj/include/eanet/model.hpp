#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "eanet/backbone.hpp"
#include "eanet/datasets.hpp"
#include "eanet/fusion.hpp"
#include "eanet/head.hpp"

namespace eanet {

/// agg-esk: ESK aggregation over the five branches (the full model).
/// sum: aggregation module removed, branches combined element-wise.
enum class Variant { AggEsk, Sum };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

template <typename T>
struct ModelParams {
  NetworkConfig config;
  BackboneParams<T> backbone;
  std::array<LevelFusionParams<T>, 3> fusion;
  HeadParams<T> head;
  FusionMode plain_mode = FusionMode::Mean;  // combination used when no aggregation module exists

  static ModelParams init(const NetworkConfig& config, Variant variant, std::size_t domains, std::uint64_t seed);

  Variant variant() const { return fusion[0].aggregation ? Variant::AggEsk : Variant::Sum; }
  /// Fusion used at inference and in the second training phase.
  FusionOptions inference_fusion() const {
    return {variant() == Variant::AggEsk ? FusionMode::Aggregate : plain_mode, AttributeId::ThermalCrossover};
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    backbone.visit(prefix + "backbone", f);
    for (int l = 0; l < 3; ++l) fusion[l].visit(prefix + "fusion.level" + std::to_string(l + 1), f);
    head.visit(prefix + "head", f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    backbone.visit(prefix + "backbone", f);
    for (int l = 0; l < 3; ++l) fusion[l].visit(prefix + "fusion.level" + std::to_string(l + 1), f);
    head.visit(prefix + "head", f);
  }
};

template <typename T>
struct ForwardCache {
  std::array<FusedLayerCache<T>, 3> levels;
};

/// Runs both patches through the three fused levels and returns the merged
/// level-3 feature (head input).
template <typename T>
Tensor<T> extract_features(const Tensor<T>& rgb_patch, const Tensor<T>& tir_patch, const ModelParams<T>& model,
                           const FusionOptions& fusion, ForwardCache<T>* cache = nullptr);

/// Backpropagates d(feature) through the fused levels into `grads`.
template <typename T>
void backward_features(const ForwardCache<T>& cache, const ModelParams<T>& model, const FusionOptions& fusion,
                       const Tensor<T>& d_feature, const GradientScope& scope, ModelParams<T>* grads);

/// Network input for one box in a frame pair.
struct PatchPair {
  Tensor<float> rgb;
  Tensor<float> tir;
};

PatchPair extract_patch_pair(const FramePair& frame, const BoundingBox& box, const NetworkConfig& config);

}  // namespace eanet
