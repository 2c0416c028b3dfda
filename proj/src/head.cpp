#include "eanet/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace eanet {

template <typename T>
HeadParams<T> HeadParams<T>::init(std::size_t input_dim, std::size_t width, std::size_t domains, double dropout,
                                  Rng& rng) {
  HeadParams p;
  p.fc4 = LinearParams<T>::he_normal(width, input_dim, rng);
  p.fc5 = LinearParams<T>::he_normal(width, width, rng);
  for (std::size_t d = 0; d < domains; ++d) p.fc6.push_back(make_domain(width, rng));
  p.dropout = dropout;
  return p;
}

template <typename T>
LinearParams<T> HeadParams<T>::make_domain(std::size_t width, Rng& rng) {
  return LinearParams<T>::normal(2, width, 0.01, rng);
}

template <typename T>
Tensor<T> merge_modalities(const Tensor<T>& rgb, const Tensor<T>& tir) {
  Tensor<T> out({rgb.size() + tir.size()});
  std::copy(rgb.values().begin(), rgb.values().end(), out.data());
  std::copy(tir.values().begin(), tir.values().end(), out.data() + rgb.size());
  return out;
}

namespace {

template <typename T>
using WeightMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
RowMatrix<T> affine(const RowMatrix<T>& x, const LinearParams<T>& p) {
  WeightMap<T> w(p.weight.data(), p.out_features(), p.in_features());
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(p.bias.data(), p.out_features());
  RowMatrix<T> y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

template <typename T>
RowMatrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  RowMatrix<T> mask(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : T{0};
  return mask;
}

template <typename T>
void affine_backward(const RowMatrix<T>& x, const LinearParams<T>& p, const RowMatrix<T>& dy, RowMatrix<T>* dx,
                     LinearParams<T>* grads) {
  WeightMap<T> w(p.weight.data(), p.out_features(), p.in_features());
  if (grads) {
    Eigen::Map<RowMatrix<T>> dw(grads->weight.data(), p.out_features(), p.in_features());
    dw.noalias() += dy.transpose() * x;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads->bias.data(), p.out_features());
    db += dy.colwise().sum();
  }
  if (dx) *dx = dy * w;
}

}  // namespace

template <typename T>
RowMatrix<T> head_forward(const RowMatrix<T>& features, const HeadParams<T>& params, std::size_t domain,
                          Rng* dropout_rng, HeadCache<T>* cache) {
  if (domain >= params.domains()) {
    throw std::out_of_range("head_forward: domain " + std::to_string(domain) + " out of range (" +
                            std::to_string(params.domains()) + " domains)");
  }
  if (static_cast<std::size_t>(features.cols()) != params.input_dim()) {
    throw std::invalid_argument("head_forward: feature width " + std::to_string(features.cols()) + " != " +
                                std::to_string(params.input_dim()));
  }
  RowMatrix<T> h4 = affine(features, params.fc4).cwiseMax(T{0});
  RowMatrix<T> a4 = h4;
  RowMatrix<T> m4, m5;
  if (dropout_rng && params.dropout > 0) {
    m4 = dropout_mask<T>(h4.rows(), h4.cols(), params.dropout, *dropout_rng);
    a4 = a4.cwiseProduct(m4);
  }
  RowMatrix<T> h5 = affine(a4, params.fc5).cwiseMax(T{0});
  RowMatrix<T> a5 = h5;
  if (dropout_rng && params.dropout > 0) {
    m5 = dropout_mask<T>(h5.rows(), h5.cols(), params.dropout, *dropout_rng);
    a5 = a5.cwiseProduct(m5);
  }
  RowMatrix<T> logits = affine(a5, params.fc6[domain]);
  if (cache) {
    cache->input = features;
    cache->h4 = std::move(h4);
    cache->h5 = std::move(h5);
    cache->mask4 = std::move(m4);
    cache->mask5 = std::move(m5);
    cache->domain = domain;
  }
  return logits;
}

template <typename T>
HeadLogits head_forward(const Tensor<T>& rgb_feat, const Tensor<T>& tir_feat, const HeadParams<T>& params,
                        std::size_t domain) {
  const Tensor<T> merged = merge_modalities(rgb_feat, tir_feat);
  const RowMatrix<T> row = Eigen::Map<const RowMatrix<T>>(merged.data(), 1, static_cast<Eigen::Index>(merged.size()));
  const RowMatrix<T> logits = head_forward(row, params, domain);
  return {static_cast<double>(logits(0, kPositiveColumn)), static_cast<double>(logits(0, 1 - kPositiveColumn))};
}

template <typename T>
RowMatrix<T> head_backward(const HeadCache<T>& cache, const HeadParams<T>& params, const RowMatrix<T>& d_logits,
                           HeadParams<T>* grads) {
  const bool dropped = cache.mask4.size() > 0;
  const RowMatrix<T> a4 = dropped ? RowMatrix<T>(cache.h4.cwiseProduct(cache.mask4)) : cache.h4;
  const RowMatrix<T> a5 = dropped ? RowMatrix<T>(cache.h5.cwiseProduct(cache.mask5)) : cache.h5;

  RowMatrix<T> d_a5;
  affine_backward(a5, params.fc6[cache.domain], d_logits, &d_a5, grads ? &grads->fc6[cache.domain] : nullptr);
  RowMatrix<T> d_h5 = dropped ? RowMatrix<T>(d_a5.cwiseProduct(cache.mask5)) : d_a5;
  d_h5 = (cache.h5.array() > T{0}).select(d_h5, T{0});

  RowMatrix<T> d_a4;
  affine_backward(a4, params.fc5, d_h5, &d_a4, grads ? &grads->fc5 : nullptr);
  RowMatrix<T> d_h4 = dropped ? RowMatrix<T>(d_a4.cwiseProduct(cache.mask4)) : d_a4;
  d_h4 = (cache.h4.array() > T{0}).select(d_h4, T{0});

  RowMatrix<T> d_in;
  affine_backward(cache.input, params.fc4, d_h4, &d_in, grads ? &grads->fc4 : nullptr);
  return d_in;
}

template <typename T>
double bce_loss(const RowMatrix<T>& logits, std::span<const int> labels, RowMatrix<T>* d_logits) {
  const Eigen::Index batch = logits.rows();
  if (batch < 1) throw std::invalid_argument("bce_loss: empty batch");
  if (logits.cols() != 2) throw std::invalid_argument("bce_loss: expected two logits per row");
  if (static_cast<std::size_t>(batch) != labels.size()) throw std::invalid_argument("bce_loss: label count mismatch");
  if (d_logits) d_logits->resize(batch, 2);
  double total = 0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
    const double l0 = logits(i, 0), l1 = logits(i, 1);
    const double mx = std::max(l0, l1);
    const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
    const int col = y == 1 ? kPositiveColumn : 1 - kPositiveColumn;
    total += lse - logits(i, col);
    if (d_logits) {
      for (int c = 0; c < 2; ++c) {
        const double p = std::exp(static_cast<double>(logits(i, c)) - lse);
        (*d_logits)(i, c) = static_cast<T>((p - (c == col ? 1.0 : 0.0)) / static_cast<double>(batch));
      }
    }
  }
  return total / static_cast<double>(batch);
}

std::vector<std::size_t> hard_negative_mining(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    throw std::invalid_argument("hard_negative_mining: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

#define EANET_INSTANTIATE(T)                                                                                    \
  template struct HeadParams<T>;                                                                                \
  template Tensor<T> merge_modalities(const Tensor<T>&, const Tensor<T>&);                                      \
  template RowMatrix<T> head_forward(const RowMatrix<T>&, const HeadParams<T>&, std::size_t, Rng*, HeadCache<T>*); \
  template HeadLogits head_forward(const Tensor<T>&, const Tensor<T>&, const HeadParams<T>&, std::size_t);     \
  template RowMatrix<T> head_backward(const HeadCache<T>&, const HeadParams<T>&, const RowMatrix<T>&,          \
                                      HeadParams<T>*);                                                          \
  template double bce_loss(const RowMatrix<T>&, std::span<const int>, RowMatrix<T>*);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace eanet
