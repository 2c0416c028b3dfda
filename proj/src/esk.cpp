#include "eanet/esk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "eanet/kernels.hpp"

namespace eanet {

std::size_t esk_reduced_width(std::size_t channels, const EskShape& shape) {
  const std::size_t r = static_cast<std::size_t>(std::max(shape.reduction, 1));
  return std::max<std::size_t>({channels / r, static_cast<std::size_t>(std::max(shape.min_width, 0)), 1});
}

template <typename T>
EskParams<T> EskParams<T>::init(std::size_t channels, std::size_t candidates, const EskShape& shape,
                                Rng& rng) {
  const std::size_t d = esk_reduced_width(channels, shape);
  const auto k = static_cast<std::size_t>(shape.spatial_kernel);
  EskParams p;
  p.reduce = LinearParams<T>::he_normal(d, channels, rng);
  for (std::size_t m = 0; m < candidates; ++m) p.expand.push_back(LinearParams<T>::normal(channels, d, 0.01, rng));
  p.spatial = Tensor<T>({1, 2, k, k});
  fill_normal(p.spatial, 0.01, rng);
  return p;
}

namespace {

template <typename T>
void check_candidates(std::span<const Tensor<T>> candidates, const EskParams<T>& params) {
  if (candidates.size() < 2) throw std::invalid_argument("esk_select: need at least 2 candidates");
  if (candidates.size() != params.candidates()) {
    throw std::invalid_argument("esk_select: " + std::to_string(candidates.size()) +
                                " candidates but params built for " + std::to_string(params.candidates()));
  }
  for (const auto& c : candidates) {
    if (c.rank() != 3) throw std::invalid_argument("esk_select: candidates must be [C,H,W]");
    c.check_same(candidates[0], "esk_select");
  }
  if (candidates[0].dim(0) != params.channels()) throw std::invalid_argument("esk_select: channel count mismatch");
}

template <typename T>
Padding spatial_padding(const EskParams<T>& params) {
  const int k = static_cast<int>(params.spatial.dim(2));
  return Padding{k / 2, k / 2, k - 1 - k / 2, k - 1 - k / 2};
}

}  // namespace

template <typename T>
EskOutput<T> esk_select(std::span<const Tensor<T>> candidates, const EskParams<T>& params,
                        EskCache<T>* cache) {
  check_candidates(candidates, params);
  const std::size_t M = candidates.size();
  const std::size_t C = candidates[0].dim(0);
  const std::size_t H = candidates[0].dim(1), W = candidates[0].dim(2);
  const std::size_t HW = H * W;

  // Channel attention logits a[m][c].
  Tensor<T> pooled({C});
  for (const auto& x : candidates) {
    for (std::size_t c = 0; c < C; ++c) {
      T acc{0};
      for (std::size_t p = 0; p < HW; ++p) acc += x[c * HW + p];
      pooled[c] += acc;
    }
  }
  for (std::size_t c = 0; c < C; ++c) pooled[c] /= static_cast<T>(HW);
  Tensor<T> hidden = kernels::relu_forward(kernels::linear_forward(pooled, params.reduce.weight, params.reduce.bias));
  std::vector<Tensor<T>> chan_logits;
  chan_logits.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    chan_logits.push_back(kernels::linear_forward(hidden, params.expand[m].weight, params.expand[m].bias));
  }

  // Spatial attention logits e[m][h,w].
  std::vector<Tensor<T>> descriptors(M);
  std::vector<std::vector<std::uint32_t>> max_channel(M);
  std::vector<Tensor<T>> spat_logits(M);
  const Padding pad = spatial_padding(params);
  const Tensor<T> no_bias({1});
  for (std::size_t m = 0; m < M; ++m) {
    const Tensor<T>& x = candidates[m];
    Tensor<T> d({2, H, W});
    std::vector<std::uint32_t> arg(HW);
    for (std::size_t p = 0; p < HW; ++p) {
      T sum{0};
      T best = -std::numeric_limits<T>::infinity();
      std::uint32_t best_c = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T v = x[c * HW + p];
        sum += v;
        if (v > best) {
          best = v;
          best_c = static_cast<std::uint32_t>(c);
        }
      }
      d[p] = sum / static_cast<T>(C);
      d[HW + p] = best;
      arg[p] = best_c;
    }
    spat_logits[m] = kernels::conv2d_forward(d, params.spatial, no_bias, 1, pad);
    descriptors[m] = std::move(d);
    max_channel[m] = std::move(arg);
  }

  // Shifted exponentials per axis. exp(a + e) factors, so the joint weights
  // reuse them and only need a per-element renormalization.
  AlignedVector<T> chan_exp(M * C), spat_exp(M * HW);
  EskOutput<T> out;
  out.channel_weights = Tensor<T>({M, C});
  out.spatial_weights = Tensor<T>({M, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t m = 0; m < M; ++m) mx = std::max(mx, chan_logits[m][c]);
    T z{0};
    for (std::size_t m = 0; m < M; ++m) z += chan_exp[m * C + c] = std::exp(chan_logits[m][c] - mx);
    for (std::size_t m = 0; m < M; ++m) out.channel_weights[m * C + c] = chan_exp[m * C + c] / z;
  }
  for (std::size_t p = 0; p < HW; ++p) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t m = 0; m < M; ++m) mx = std::max(mx, spat_logits[m][p]);
    T z{0};
    for (std::size_t m = 0; m < M; ++m) z += spat_exp[m * HW + p] = std::exp(spat_logits[m][p] - mx);
    for (std::size_t m = 0; m < M; ++m) out.spatial_weights[m * HW + p] = spat_exp[m * HW + p] / z;
  }

  Tensor<T> joint({M, C, H, W});
  out.selected = Tensor<T>({C, H, W});
  AlignedVector<T> z(HW);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(z.begin(), z.end(), T{0});
    for (std::size_t m = 0; m < M; ++m) {
      const T a = chan_exp[m * C + c];
      const T* e = spat_exp.data() + m * HW;
      for (std::size_t p = 0; p < HW; ++p) z[p] += a * e[p];
    }
    for (std::size_t p = 0; p < HW; ++p) {
      if (!(z[p] >= std::numeric_limits<T>::min())) {
        // Both factors peaked on different candidates; redo this entry directly.
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t m = 0; m < M; ++m) mx = std::max(mx, chan_logits[m][c] + spat_logits[m][p]);
        T zz{0};
        for (std::size_t m = 0; m < M; ++m) zz += std::exp(chan_logits[m][c] + spat_logits[m][p] - mx);
        for (std::size_t m = 0; m < M; ++m)
          joint[(m * C + c) * HW + p] = std::exp(chan_logits[m][c] + spat_logits[m][p] - mx) / zz;
        z[p] = T{0};
      } else {
        z[p] = T{1} / z[p];
      }
    }
    T* sel = out.selected.data() + c * HW;
    for (std::size_t m = 0; m < M; ++m) {
      const T a = chan_exp[m * C + c];
      const T* e = spat_exp.data() + m * HW;
      const T* x = candidates[m].data() + c * HW;
      T* jw = joint.data() + (m * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p) {
        if (z[p] != T{0}) jw[p] = a * e[p] * z[p];
        sel[p] += jw[p] * x[p];
      }
    }
  }

  if (cache) {
    cache->candidates.assign(candidates.begin(), candidates.end());
    cache->pooled_input = std::move(pooled);
    cache->hidden = std::move(hidden);
    cache->descriptors = std::move(descriptors);
    cache->max_channel = std::move(max_channel);
    cache->joint = std::move(joint);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> esk_backward(const EskCache<T>& cache, const EskParams<T>& params,
                                    const Tensor<T>& d_selected, EskParams<T>* grads) {
  const std::size_t M = cache.candidates.size();
  const auto& shape = cache.candidates[0].shape();
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  const std::size_t HW = H * W;
  cache.candidates[0].check_same(d_selected, "esk_backward");

  std::vector<Tensor<T>> dx(M, Tensor<T>(shape));
  Tensor<T> d_chan({M, C});
  std::vector<Tensor<T>> d_spat(M, Tensor<T>({1, H, W}));
  AlignedVector<T> dw(M);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < HW; ++p) {
      const std::size_t i = c * HW + p;
      const T g = d_selected[i];
      T s{0};
      for (std::size_t m = 0; m < M; ++m) {
        dw[m] = g * cache.candidates[m][i];
        s += cache.joint[m * C * HW + i] * dw[m];
      }
      for (std::size_t m = 0; m < M; ++m) {
        const T wgt = cache.joint[m * C * HW + i];
        dx[m][i] = g * wgt;
        const T dl = wgt * (dw[m] - s);
        d_chan[m * C + c] += dl;
        d_spat[m][p] += dl;
      }
    }
  }

  // Channel branch: expand_m <- hidden <- reduce <- GAP(sum).
  Tensor<T> d_hidden({cache.hidden.size()});
  for (std::size_t m = 0; m < M; ++m) {
    Tensor<T> da({C});
    std::copy_n(d_chan.data() + m * C, C, da.data());
    Tensor<T> dh;
    kernels::linear_backward(cache.hidden, params.expand[m].weight, da, &dh,
                             grads ? &grads->expand[m].weight : nullptr,
                             grads ? &grads->expand[m].bias : nullptr);
    d_hidden += dh;
  }
  Tensor<T> d_pre = kernels::relu_backward(cache.hidden, d_hidden);
  Tensor<T> d_pooled;
  kernels::linear_backward(cache.pooled_input, params.reduce.weight, d_pre, &d_pooled,
                           grads ? &grads->reduce.weight : nullptr, grads ? &grads->reduce.bias : nullptr);
  for (std::size_t c = 0; c < C; ++c) {
    const T g = d_pooled[c] / static_cast<T>(HW);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t p = 0; p < HW; ++p) dx[m][c * HW + p] += g;
  }

  // Spatial branch: shared conv <- [mean; max] descriptors.
  const int k = static_cast<int>(params.spatial.dim(2));
  const Padding pad{k / 2, k / 2, k - 1 - k / 2, k - 1 - k / 2};
  for (std::size_t m = 0; m < M; ++m) {
    Tensor<T> dd;
    kernels::conv2d_backward(cache.descriptors[m], params.spatial, 1, pad, d_spat[m], &dd,
                             grads ? &grads->spatial : nullptr, static_cast<Tensor<T>*>(nullptr));
    for (std::size_t p = 0; p < HW; ++p) {
      const T gm = dd[p] / static_cast<T>(C);
      for (std::size_t c = 0; c < C; ++c) dx[m][c * HW + p] += gm;
      dx[m][cache.max_channel[m][p] * HW + p] += dd[HW + p];
    }
  }
  return dx;
}

template struct EskParams<float>;
template struct EskParams<double>;
template EskOutput<float> esk_select(std::span<const Tensor<float>>, const EskParams<float>&, EskCache<float>*);
template EskOutput<double> esk_select(std::span<const Tensor<double>>, const EskParams<double>&, EskCache<double>*);
template std::vector<Tensor<float>> esk_backward(const EskCache<float>&, const EskParams<float>&,
                                                 const Tensor<float>&, EskParams<float>*);
template std::vector<Tensor<double>> esk_backward(const EskCache<double>&, const EskParams<double>&,
                                                  const Tensor<double>&, EskParams<double>*);

}  // namespace eanet
