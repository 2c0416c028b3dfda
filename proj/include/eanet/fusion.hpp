#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eanet/backbone.hpp"
#include "eanet/esk.hpp"

namespace eanet {

/// The five challenge attributes that each own a fusion branch.
enum class AttributeId { ThermalCrossover = 0, IlluminationVariation, ScaleVariation, Occlusion, FastMotion };

inline constexpr std::size_t kAttributeCount = 5;
inline constexpr std::array<AttributeId, kAttributeCount> kAllAttributes{
    AttributeId::ThermalCrossover, AttributeId::IlluminationVariation, AttributeId::ScaleVariation,
    AttributeId::Occlusion, AttributeId::FastMotion};

std::string_view attribute_name(AttributeId id);  // "TC", "IV", "SV", "OCC", "FM"
std::optional<AttributeId> parse_attribute(std::string_view name);

/// One attribute branch at one level: concat(rgb, tir) -> conv5x5 (pad 2) ->
/// ReLU -> conv4x4 (pad 1 top/left, 2 bottom/right) -> ESK over the two
/// maps taken before and after the 4x4 convolution.
template <typename T>
struct BranchParams {
  ConvParams<T> conv5;
  ConvParams<T> conv4;
  EskParams<T> esk;

  static BranchParams init(std::size_t channels, const EskShape& shape, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    conv5.visit(prefix + ".conv5", f);
    conv4.visit(prefix + ".conv4", f);
    esk.visit(prefix + ".esk", f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    conv5.visit(prefix + ".conv5", f);
    conv4.visit(prefix + ".conv4", f);
    esk.visit(prefix + ".esk", f);
  }
};

inline constexpr Padding kBranchPad5 = Padding::uniform(2);
inline constexpr Padding kBranchPad4 = Padding{1, 1, 2, 2};

template <typename T>
struct BranchCache {
  Tensor<T> input;   // [2C, H, W]
  Tensor<T> hidden;  // ReLU(conv5)
  Tensor<T> refined; // conv4(hidden)
  EskCache<T> esk;
};

template <typename T>
Tensor<T> branch_forward(const Tensor<T>& rgb, const Tensor<T>& tir, const BranchParams<T>& params,
                         BranchCache<T>* cache = nullptr);

/// d_rgb / d_tir may be null when the input gradient is not needed.
template <typename T>
void branch_backward(const BranchCache<T>& cache, const BranchParams<T>& params, const Tensor<T>& d_out,
                     Tensor<T>* d_rgb, Tensor<T>* d_tir, BranchParams<T>* grads);

/// ESK selection across exactly five branch outputs.
template <typename T>
EskOutput<T> aggregate(std::span<const Tensor<T>> branch_outputs, const EskParams<T>& params,
                       EskCache<T>* cache = nullptr);

/// How the level residual V is formed from the branch outputs.
enum class FusionMode {
  Aggregate,     // ESK aggregation module
  Mean,          // element-wise mean of the five branches
  Sum,           // element-wise sum of the five branches
  SingleBranch,  // only the selected branch (first training phase)
};

struct FusionOptions {
  FusionMode mode = FusionMode::Aggregate;
  AttributeId branch = AttributeId::ThermalCrossover;
};

/// Fusion parameters for one backbone level.
template <typename T>
struct LevelFusionParams {
  std::array<BranchParams<T>, kAttributeCount> branches;
  std::optional<EskParams<T>> aggregation;

  BranchParams<T>& branch(AttributeId a) { return branches[static_cast<int>(a)]; }
  const BranchParams<T>& branch(AttributeId a) const { return branches[static_cast<int>(a)]; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (auto a : kAllAttributes) branch(a).visit(prefix + ".branch." + std::string(attribute_name(a)), f);
    if (aggregation) aggregation->visit(prefix + ".aggregation", f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    for (auto a : kAllAttributes) branch(a).visit(prefix + ".branch." + std::string(attribute_name(a)), f);
    if (aggregation) aggregation->visit(prefix + ".aggregation", f);
  }
};

template <typename T>
struct FusedLayerCache {
  Tensor<T> rgb_in, tir_in;
  Tensor<T> rgb_conv, tir_conv;
  std::vector<BranchCache<T>> branches;  // active branches, in attribute order
  std::vector<AttributeId> active;
  EskCache<T> aggregation;
  PostCache<T> rgb_post, tir_post;
};

template <typename T>
struct FusedLayerOutput {
  Tensor<T> rgb;
  Tensor<T> tir;
};

/// One hierarchical level (0-based index): conv+ReLU per modality, residual
/// V from the attribute branches added to both streams, then LRN/pool.
template <typename T>
FusedLayerOutput<T> fused_layer_forward(const Tensor<T>& rgb_in, const Tensor<T>& tir_in, int level,
                                        const BackboneParams<T>& backbone, const LevelFusionParams<T>& fusion,
                                        const NetworkConfig& config, const FusionOptions& options,
                                        FusedLayerCache<T>* cache = nullptr);

/// Which parameter gradients a backward pass should produce.
struct GradientScope {
  bool backbone = true;
  bool branches = true;
  bool aggregation = true;
  bool input = true;  // gradient w.r.t. the layer inputs
};

template <typename T>
struct FusedLayerGrads {
  BackboneParams<T>* backbone = nullptr;
  LevelFusionParams<T>* fusion = nullptr;
};

template <typename T>
FusedLayerOutput<T> fused_layer_backward(const FusedLayerCache<T>& cache, int level,
                                         const BackboneParams<T>& backbone, const LevelFusionParams<T>& fusion,
                                         const NetworkConfig& config, const FusionOptions& options,
                                         const Tensor<T>& d_rgb_out, const Tensor<T>& d_tir_out,
                                         const GradientScope& scope, FusedLayerGrads<T> grads);

}  // namespace eanet
