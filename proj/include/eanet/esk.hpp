#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eanet/params.hpp"

namespace eanet {

struct EskShape {
  int reduction = 16;    // r
  int min_width = 4;     // L
  int spatial_kernel = 7;
};

/// d = max(C / r, L), at least 1.
std::size_t esk_reduced_width(std::size_t channels, const EskShape& shape);

/// Selective-kernel attention over M candidate maps. Channel attention:
/// GAP(sum of candidates) -> reduce FC -> ReLU -> one expand FC per candidate.
/// Spatial attention: per-candidate [mean; max] over channels -> shared conv.
template <typename T>
struct EskParams {
  LinearParams<T> reduce;               // [d, C]
  std::vector<LinearParams<T>> expand;  // M x [C, d]
  // [1, 2, k, k]. No bias: a shift shared by every candidate cancels in the
  // softmax across candidates.
  Tensor<T> spatial;

  std::size_t candidates() const { return expand.size(); }
  std::size_t channels() const { return reduce.in_features(); }

  static EskParams init(std::size_t channels, std::size_t candidates, const EskShape& shape,
                        Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    reduce.visit(prefix + ".reduce", f);
    for (std::size_t m = 0; m < expand.size(); ++m) expand[m].visit(prefix + ".expand" + std::to_string(m), f);
    f(prefix + ".spatial.weight", spatial);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    reduce.visit(prefix + ".reduce", f);
    for (std::size_t m = 0; m < expand.size(); ++m) expand[m].visit(prefix + ".expand" + std::to_string(m), f);
    f(prefix + ".spatial.weight", spatial);
  }
};

template <typename T>
struct EskOutput {
  Tensor<T> selected;         // [C, H, W]
  Tensor<T> channel_weights;  // [M, C], softmax across M
  Tensor<T> spatial_weights;  // [M, H, W], softmax across M
};

template <typename T>
struct EskCache {
  std::vector<Tensor<T>> candidates;
  Tensor<T> pooled_input;  // GAP of the candidate sum, [C]
  Tensor<T> hidden;        // ReLU(reduce), [d]
  std::vector<Tensor<T>> descriptors;        // [mean; max] maps, M x [2, H, W]
  std::vector<std::vector<std::uint32_t>> max_channel;  // argmax channel per location
  Tensor<T> joint;         // joint weights [M, C, H, W]
};

/// Candidates are combined with weights softmax_m(a_m[c] + e_m[h,w]), which
/// equals the product of the channel and spatial weights renormalized across M.
template <typename T>
EskOutput<T> esk_select(std::span<const Tensor<T>> candidates, const EskParams<T>& params,
                        EskCache<T>* cache = nullptr);

/// Returns d(candidates); accumulates parameter gradients into `grads` when non-null.
template <typename T>
std::vector<Tensor<T>> esk_backward(const EskCache<T>& cache, const EskParams<T>& params,
                                    const Tensor<T>& d_selected, EskParams<T>* grads);

}  // namespace eanet
