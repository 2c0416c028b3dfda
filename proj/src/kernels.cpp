#include "eanet/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace eanet {

int window_output(int extent, int pad_lo, int pad_hi, int window, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const int padded = extent + pad_lo + pad_hi;
  if (padded < window) {
    throw std::invalid_argument("spatial size " + std::to_string(extent) + " (padded " +
                                std::to_string(padded) + ") smaller than window " +
                                std::to_string(window));
  }
  return (padded - window) / stride + 1;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int channels, height, width;
  int out_channels, kh, kw;
  int out_h, out_w;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& weight, int stride, Padding pad) {
  if (x.rank() != 3 || weight.rank() != 4) throw std::invalid_argument("conv2d: expected [C,H,W] input and [O,C,kh,kw] weight");
  if (x.dim(0) != weight.dim(1)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.dim(0)) +
                                " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  ConvGeometry g{};
  g.channels = static_cast<int>(x.dim(0));
  g.height = static_cast<int>(x.dim(1));
  g.width = static_cast<int>(x.dim(2));
  g.out_channels = static_cast<int>(weight.dim(0));
  g.kh = static_cast<int>(weight.dim(2));
  g.kw = static_cast<int>(weight.dim(3));
  g.out_h = window_output(g.height, pad.top, pad.bottom, g.kh, stride);
  g.out_w = window_output(g.width, pad.left, pad.right, g.kw, stride);
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, int stride, Padding pad, T* cols) {
  const int n = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* row = cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * n;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * stride - pad.top + i;
          T* out = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            for (int ow = 0; ow < g.out_w; ++ow) out[ow] = T{0};
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * stride - pad.left + j;
            out[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, int stride, Padding pad, T* dx) {
  const int n = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* row = cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * n;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * stride - pad.top + i;
          if (ih < 0 || ih >= g.height) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const T* in = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * stride - pad.left + j;
            if (iw >= 0 && iw < g.width) dst[iw] += in[ow];
          }
        }
      }
    }
  }
}

// Narrow convolutions skip im2col: each (output, input, tap) triple becomes a
// row-wise multiply-add over the valid output span, which keeps everything in
// cache. Wide layers still go through GEMM.
constexpr int kDirectMaxOutChannels = 16;

bool use_direct(const ConvGeometry& g) { return g.out_channels <= kDirectMaxOutChannels; }

// Output columns [lo, hi) whose input column ow*stride - pad + j is inside the image.
inline void valid_span(int out_extent, int in_extent, int stride, int pad, int j, int& lo, int& hi) {
  lo = 0;
  while (lo < out_extent && lo * stride - pad + j < 0) ++lo;
  hi = out_extent;
  while (hi > lo && (hi - 1) * stride - pad + j >= in_extent) --hi;
}

// Stride-1 convolution on a zero-padded copy of the input. With row pitch
// Wp = W + left + right, every tap (i, j) is a constant offset i*Wp + j, so a
// tap is one long multiply-add over the whole plane. Output columns at or
// beyond out_w are scratch and get dropped.
struct PaddedLayout {
  int wp, hp;
  std::size_t in_plane, out_plane, slack;
};

inline PaddedLayout padded_layout(const ConvGeometry& g, Padding pad) {
  PaddedLayout l{};
  l.wp = g.width + pad.left + pad.right;
  l.hp = g.height + pad.top + pad.bottom;
  l.in_plane = static_cast<std::size_t>(l.hp) * l.wp;
  l.out_plane = static_cast<std::size_t>(g.out_h) * l.wp;
  l.slack = static_cast<std::size_t>(g.kw);
  return l;
}

template <typename T>
AlignedVector<T> pad_planes(const T* x, const ConvGeometry& g, Padding pad, const PaddedLayout& l) {
  AlignedVector<T> out(g.channels * l.in_plane + l.slack, T{0});
  for (int c = 0; c < g.channels; ++c)
    for (int h = 0; h < g.height; ++h)
      std::copy_n(x + (static_cast<std::size_t>(c) * g.height + h) * g.width, g.width,
                  out.data() + c * l.in_plane + static_cast<std::size_t>(h + pad.top) * l.wp + pad.left);
  return out;
}

template <typename T>
void s1_forward(const T* x, const T* w, const T* b, const ConvGeometry& g, Padding pad, T* y) {
  const PaddedLayout l = padded_layout(g, pad);
  const AlignedVector<T> xp = pad_planes(x, g, pad, l);
  const std::size_t n = l.out_plane;
#pragma omp parallel
  {
    AlignedVector<T> acc(n);
#pragma omp for schedule(static)
    for (int o = 0; o < g.out_channels; ++o) {
      T* __restrict a = acc.data();
      std::fill(a, a + n, b[o]);
      for (int c = 0; c < g.channels; ++c) {
        for (int i = 0; i < g.kh; ++i) {
          for (int j = 0; j < g.kw; ++j) {
            const T wt = w[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j];
            const T* __restrict src = xp.data() + c * l.in_plane + static_cast<std::size_t>(i) * l.wp + j;
            for (std::size_t q = 0; q < n; ++q) a[q] += wt * src[q];
          }
        }
      }
      T* yo = y + static_cast<std::size_t>(o) * g.out_h * g.out_w;
      for (int oh = 0; oh < g.out_h; ++oh) std::copy_n(a + static_cast<std::size_t>(oh) * l.wp, g.out_w, yo + oh * g.out_w);
    }
  }
}

// dy laid out on the padded pitch, scratch columns zeroed.
template <typename T>
AlignedVector<T> pad_output_grad(const T* dy, const ConvGeometry& g, const PaddedLayout& l) {
  AlignedVector<T> out(g.out_channels * l.out_plane, T{0});
  for (int o = 0; o < g.out_channels; ++o)
    for (int oh = 0; oh < g.out_h; ++oh)
      std::copy_n(dy + (static_cast<std::size_t>(o) * g.out_h + oh) * g.out_w, g.out_w,
                  out.data() + o * l.out_plane + static_cast<std::size_t>(oh) * l.wp);
  return out;
}

template <typename T>
void s1_backward(const T* x, const T* w, const T* dy, const ConvGeometry& g, Padding pad, T* dx, T* dw) {
  const PaddedLayout l = padded_layout(g, pad);
  const AlignedVector<T> gp = pad_output_grad(dy, g, l);
  const std::size_t n = l.out_plane;
  if (dw) {
    const AlignedVector<T> xp = pad_planes(x, g, pad, l);
#pragma omp parallel for schedule(static)
    for (int o = 0; o < g.out_channels; ++o) {
      const T* __restrict gy = gp.data() + o * n;
      for (int c = 0; c < g.channels; ++c) {
        for (int i = 0; i < g.kh; ++i) {
          for (int j = 0; j < g.kw; ++j) {
            const T* __restrict src = xp.data() + c * l.in_plane + static_cast<std::size_t>(i) * l.wp + j;
            using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
            const T acc = Eigen::Map<const Vec>(gy, static_cast<Eigen::Index>(n))
                              .dot(Eigen::Map<const Vec>(src, static_cast<Eigen::Index>(n)));
            dw[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j] += acc;
          }
        }
      }
    }
  }
  if (dx) {
#pragma omp parallel
    {
      AlignedVector<T> dxp(l.in_plane + l.slack);
#pragma omp for schedule(static)
      for (int c = 0; c < g.channels; ++c) {
        std::fill(dxp.begin(), dxp.end(), T{0});
        for (int o = 0; o < g.out_channels; ++o) {
          const T* __restrict gy = gp.data() + o * n;
          for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
              const T wt = w[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j];
              T* __restrict dst = dxp.data() + static_cast<std::size_t>(i) * l.wp + j;
              for (std::size_t q = 0; q < n; ++q) dst[q] += wt * gy[q];
            }
          }
        }
        T* dxc = dx + static_cast<std::size_t>(c) * g.height * g.width;
        for (int h = 0; h < g.height; ++h)
          std::copy_n(dxp.data() + static_cast<std::size_t>(h + pad.top) * l.wp + pad.left, g.width, dxc + h * g.width);
      }
    }
  }
}

template <typename T>
void direct_forward(const T* __restrict x, const T* __restrict w, const T* __restrict b, const ConvGeometry& g,
                    int stride, Padding pad, T* __restrict y) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < g.out_channels; ++o) {
    T* yo = y + o * plane;
    std::fill(yo, yo + plane, b[o]);
    for (int c = 0; c < g.channels; ++c) {
      const T* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
      for (int i = 0; i < g.kh; ++i) {
        for (int j = 0; j < g.kw; ++j) {
          const T wt = w[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j];
          int lo, hi;
          valid_span(g.out_w, g.width, stride, pad.left, j, lo, hi);
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * stride - pad.top + i;
            if (ih < 0 || ih >= g.height) continue;
            const T* __restrict src = xc + static_cast<std::size_t>(ih) * g.width;
            T* __restrict dst = yo + static_cast<std::size_t>(oh) * g.out_w;
            if (stride == 1) {
              const int shift = j - pad.left;
              for (int ow = lo; ow < hi; ++ow) dst[ow] += wt * src[ow + shift];
            } else {
              for (int ow = lo; ow < hi; ++ow) dst[ow] += wt * src[ow * stride - pad.left + j];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void direct_backward_input(const T* __restrict w, const T* __restrict dy, const ConvGeometry& g, int stride,
                           Padding pad, T* __restrict dx) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T* dxc = dx + static_cast<std::size_t>(c) * g.height * g.width;
    for (int o = 0; o < g.out_channels; ++o) {
      const T* dyo = dy + o * plane;
      for (int i = 0; i < g.kh; ++i) {
        for (int j = 0; j < g.kw; ++j) {
          const T wt = w[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j];
          int lo, hi;
          valid_span(g.out_w, g.width, stride, pad.left, j, lo, hi);
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * stride - pad.top + i;
            if (ih < 0 || ih >= g.height) continue;
            T* __restrict dst = dxc + static_cast<std::size_t>(ih) * g.width;
            const T* __restrict src = dyo + static_cast<std::size_t>(oh) * g.out_w;
            if (stride == 1) {
              const int shift = j - pad.left;
              for (int ow = lo; ow < hi; ++ow) dst[ow + shift] += wt * src[ow];
            } else {
              for (int ow = lo; ow < hi; ++ow) dst[ow * stride - pad.left + j] += wt * src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void direct_backward_weight(const T* x, const T* dy, const ConvGeometry& g, int stride, Padding pad, T* dw) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < g.out_channels; ++o) {
    const T* dyo = dy + o * plane;
    for (int c = 0; c < g.channels; ++c) {
      const T* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
      for (int i = 0; i < g.kh; ++i) {
        for (int j = 0; j < g.kw; ++j) {
          int lo, hi;
          valid_span(g.out_w, g.width, stride, pad.left, j, lo, hi);
          T acc{0};
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * stride - pad.top + i;
            if (ih < 0 || ih >= g.height) continue;
            const T* src = xc + static_cast<std::size_t>(ih) * g.width;
            const T* gy = dyo + static_cast<std::size_t>(oh) * g.out_w;
            if (stride == 1) {
              const int shift = j - pad.left;
              for (int ow = lo; ow < hi; ++ow) acc += gy[ow] * src[ow + shift];
            } else {
              for (int ow = lo; ow < hi; ++ow) acc += gy[ow] * src[ow * stride - pad.left + j];
            }
          }
          dw[((static_cast<std::size_t>(o) * g.channels + c) * g.kh + i) * g.kw + j] += acc;
        }
      }
    }
  }
}

}  // namespace

namespace kernels {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, Padding pad) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  if (bias.size() != static_cast<std::size_t>(g.out_channels)) throw std::invalid_argument("conv2d: bias size mismatch");
  Tensor<T> y({static_cast<std::size_t>(g.out_channels), static_cast<std::size_t>(g.out_h),
               static_cast<std::size_t>(g.out_w)});
  if (use_direct(g) && stride == 1) {
    s1_forward(x.data(), weight.data(), bias.data(), g, pad, y.data());
    return y;
  }
  if (use_direct(g)) {
    direct_forward(x.data(), weight.data(), bias.data(), g, stride, pad, y.data());
    return y;
  }
  const int k = g.channels * g.kh * g.kw;
  const int n = g.out_h * g.out_w;
  AlignedVector<T> cols(static_cast<std::size_t>(k) * n);
  im2col(x.data(), g, stride, pad, cols.data());
  Eigen::Map<const RowMat<T>> w(weight.data(), g.out_channels, k);
  Eigen::Map<const RowMat<T>> c(cols.data(), k, n);
  Eigen::Map<RowMat<T>> out(y.data(), g.out_channels, n);
  out.noalias() = w * c;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), g.out_channels);
  out.colwise() += b;
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, Padding pad,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  const int k = g.channels * g.kh * g.kw;
  const int n = g.out_h * g.out_w;
  if (dy.size() != static_cast<std::size_t>(g.out_channels) * n) throw std::invalid_argument("conv2d_backward: dy shape mismatch");
  Eigen::Map<const RowMat<T>> w(weight.data(), g.out_channels, k);
  Eigen::Map<const RowMat<T>> gy(dy.data(), g.out_channels, n);

  if (dbias) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(dbias->data(), g.out_channels);
    db += gy.rowwise().sum();
  }
  if (use_direct(g) && stride == 1) {
    if (dweight && dweight->size() != weight.size()) throw std::invalid_argument("conv2d_backward: dweight shape mismatch");
    if (dx) *dx = Tensor<T>(x.shape());
    s1_backward(x.data(), weight.data(), dy.data(), g, pad, dx ? dx->data() : nullptr,
                dweight ? dweight->data() : nullptr);
    return;
  }
  if (use_direct(g)) {
    if (dweight) {
      if (dweight->size() != weight.size()) throw std::invalid_argument("conv2d_backward: dweight shape mismatch");
      direct_backward_weight(x.data(), dy.data(), g, stride, pad, dweight->data());
    }
    if (dx) {
      *dx = Tensor<T>(x.shape());
      direct_backward_input(weight.data(), dy.data(), g, stride, pad, dx->data());
    }
    return;
  }
  if (dweight) {
    AlignedVector<T> cols(static_cast<std::size_t>(k) * n);
    im2col(x.data(), g, stride, pad, cols.data());
    Eigen::Map<const RowMat<T>> c(cols.data(), k, n);
    Eigen::Map<RowMat<T>> dw(dweight->data(), g.out_channels, k);
    dw.noalias() += gy * c.transpose();
  }
  if (dx) {
    AlignedVector<T> dcols(static_cast<std::size_t>(k) * n);
    Eigen::Map<RowMat<T>> dc(dcols.data(), k, n);
    dc.noalias() = w.transpose() * gy;
    *dx = Tensor<T>(x.shape());
    col2im(dcols.data(), g, stride, pad, dx->data());
  }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  y.check_same(dy, "relu_backward");
  Tensor<T> dx(y.shape());
  const std::size_t n = y.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnSpec& spec, Tensor<T>* scale) {
  const int c_count = static_cast<int>(x.dim(0));
  const std::size_t plane = x.dim(1) * x.dim(2);
  const int half = spec.size / 2;
  const T a = static_cast<T>(spec.alpha / spec.size);
  const T beta = static_cast<T>(spec.beta);
  Tensor<T> y(x.shape());
  Tensor<T> s(x.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < c_count; ++c) {
    const int lo = std::max(0, c - half);
    const int hi = std::min(c_count - 1, c + half);
    for (std::size_t p = 0; p < plane; ++p) {
      T acc{0};
      for (int j = lo; j <= hi; ++j) {
        const T v = x[j * plane + p];
        acc += v * v;
      }
      const T base = static_cast<T>(spec.k) + a * acc;
      s[c * plane + p] = base;
      y[c * plane + p] = x[c * plane + p] * std::pow(base, -beta);
    }
  }
  if (scale) *scale = std::move(s);
  return y;
}

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& x, const Tensor<T>& scale, const LrnSpec& spec,
                       const Tensor<T>& dy) {
  x.check_same(dy, "lrn_backward");
  const int c_count = static_cast<int>(x.dim(0));
  const std::size_t plane = x.dim(1) * x.dim(2);
  const int half = spec.size / 2;
  const T a = static_cast<T>(spec.alpha / spec.size);
  const T beta = static_cast<T>(spec.beta);
  // t_c = dy_c * x_c * s_c^(-beta-1)
  Tensor<T> t(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) t[i] = dy[i] * x[i] * std::pow(scale[i], -beta - T{1});
  Tensor<T> dx(x.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < c_count; ++c) {
    const int lo = std::max(0, c - half);
    const int hi = std::min(c_count - 1, c + half);
    for (std::size_t p = 0; p < plane; ++p) {
      T acc{0};
      for (int j = lo; j <= hi; ++j) acc += t[j * plane + p];
      const std::size_t i = c * plane + p;
      dx[i] = dy[i] * std::pow(scale[i], -beta) - T{2} * beta * a * x[i] * acc;
    }
  }
  return dx;
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride,
                          std::vector<std::uint32_t>* argmax) {
  const int c_count = static_cast<int>(x.dim(0));
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  const int oh = window_output(h, 0, 0, window, stride);
  const int ow = window_output(w, 0, 0, window, stride);
  Tensor<T> y({x.dim(0), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  std::vector<std::uint32_t> idx(y.size());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < c_count; ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::uint32_t best = 0;
        T best_v = -std::numeric_limits<T>::infinity();
        for (int di = 0; di < window; ++di) {
          for (int dj = 0; dj < window; ++dj) {
            const std::uint32_t flat = static_cast<std::uint32_t>((c * h + i * stride + di) * w + j * stride + dj);
            if (x[flat] > best_v) {
              best_v = x[flat];
              best = flat;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + i) * ow + j;
        y[o] = best_v;
        idx[o] = best;
      }
    }
  }
  if (argmax) *argmax = std::move(idx);
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                           const std::vector<std::size_t>& input_shape) {
  if (argmax.size() != dy.size()) throw std::invalid_argument("maxpool_backward: argmax size mismatch");
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const std::size_t out = weight.dim(0);
  const std::size_t in = weight.dim(1);
  if (x.size() != in) throw std::invalid_argument("linear: input size " + std::to_string(x.size()) + " != " + std::to_string(in));
  Tensor<T> y({out});
  Eigen::Map<const RowMat<T>> w(weight.data(), out, in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data(), in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), out);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.data(), out);
  yv.noalias() = w * xv;
  yv += b;
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const std::size_t out = weight.dim(0);
  const std::size_t in = weight.dim(1);
  Eigen::Map<const RowMat<T>> w(weight.data(), out, in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data(), in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> g(dy.data(), out);
  if (dbias) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(dbias->data(), out);
    db += g;
  }
  if (dweight) {
    Eigen::Map<RowMat<T>> dw(dweight->data(), out, in);
    dw.noalias() += g * xv.transpose();
  }
  if (dx) {
    *dx = Tensor<T>(x.shape());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> d(dx->data(), in);
    d.noalias() = w.transpose() * g;
  }
}

#define EANET_INSTANTIATE(T)                                                                      \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,  \
                                    Padding);                                                     \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, int, Padding,               \
                                const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);           \
  template Tensor<T> relu_forward(const Tensor<T>&);                                              \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> lrn_forward(const Tensor<T>&, const LrnSpec&, Tensor<T>*);                   \
  template Tensor<T> lrn_backward(const Tensor<T>&, const Tensor<T>&, const LrnSpec&,             \
                                  const Tensor<T>&);                                              \
  template Tensor<T> maxpool_forward(const Tensor<T>&, int, int, std::vector<std::uint32_t>*);   \
  template Tensor<T> maxpool_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,        \
                                      const std::vector<std::size_t>&);                           \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template void linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, \
                                Tensor<T>*, Tensor<T>*);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace kernels
}  // namespace eanet
