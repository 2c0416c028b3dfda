#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "eanet/params.hpp"

namespace eanet {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Column of the positive (target) class in head logits; column 0 is background.
inline constexpr int kPositiveColumn = 1;

/// FC4 -> ReLU -> dropout -> FC5 -> ReLU -> dropout -> FC6[domain]. One FC6
/// block per training domain.
template <typename T>
struct HeadParams {
  LinearParams<T> fc4;
  LinearParams<T> fc5;
  std::vector<LinearParams<T>> fc6;
  double dropout = 0.5;

  std::size_t domains() const { return fc6.size(); }
  std::size_t input_dim() const { return fc4.in_features(); }

  static HeadParams init(std::size_t input_dim, std::size_t width, std::size_t domains, double dropout, Rng& rng);
  static LinearParams<T> make_domain(std::size_t width, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    fc4.visit(prefix + ".fc4", f);
    fc5.visit(prefix + ".fc5", f);
    for (std::size_t d = 0; d < fc6.size(); ++d) fc6[d].visit(prefix + ".fc6." + std::to_string(d), f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    fc4.visit(prefix + ".fc4", f);
    fc5.visit(prefix + ".fc5", f);
    for (std::size_t d = 0; d < fc6.size(); ++d) fc6[d].visit(prefix + ".fc6." + std::to_string(d), f);
  }
};

template <typename T>
struct HeadCache {
  RowMatrix<T> input;
  RowMatrix<T> h4, h5;        // post-ReLU activations
  RowMatrix<T> mask4, mask5;  // dropout scale (0 or 1/(1-p)); empty at inference
  std::size_t domain = 0;
};

/// Concatenates the flattened RGB and TIR level-3 maps into one head input row.
template <typename T>
Tensor<T> merge_modalities(const Tensor<T>& rgb, const Tensor<T>& tir);

/// Batched head over feature rows [B, D]; returns logits [B, 2]. Dropout is
/// applied only when `dropout_rng` is non-null.
template <typename T>
RowMatrix<T> head_forward(const RowMatrix<T>& features, const HeadParams<T>& params, std::size_t domain,
                          Rng* dropout_rng = nullptr, HeadCache<T>* cache = nullptr);

struct HeadLogits {
  double positive = 0;
  double negative = 0;
};

/// Single-sample form over the two level-3 maps.
template <typename T>
HeadLogits head_forward(const Tensor<T>& rgb_feat, const Tensor<T>& tir_feat, const HeadParams<T>& params,
                        std::size_t domain);

/// Returns d(features); accumulates into `grads` when non-null.
template <typename T>
RowMatrix<T> head_backward(const HeadCache<T>& cache, const HeadParams<T>& params, const RowMatrix<T>& d_logits,
                           HeadParams<T>* grads);

/// Mean softmax cross-entropy over rows; labels are 1 (target) or 0 (background).
/// When `d_logits` is non-null it receives the gradient of the mean loss.
template <typename T>
double bce_loss(const RowMatrix<T>& logits, std::span<const int> labels, RowMatrix<T>* d_logits = nullptr);

/// Indices of the k largest scores, descending, ties broken by lower index.
std::vector<std::size_t> hard_negative_mining(std::span<const double> scores, std::size_t k);

}  // namespace eanet
