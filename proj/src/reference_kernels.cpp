#include <cmath>
#include <limits>
#include <stdexcept>

#include "eanet/kernels.hpp"

namespace eanet::reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, Padding pad) {
  const int c_in = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const int c_out = static_cast<int>(weight.dim(0)), kh = static_cast<int>(weight.dim(2)),
            kw = static_cast<int>(weight.dim(3));
  if (static_cast<int>(weight.dim(1)) != c_in) throw std::invalid_argument("reference conv2d: channel mismatch");
  const int oh = window_output(h, pad.top, pad.bottom, kh, stride);
  const int ow = window_output(w, pad.left, pad.right, kw, stride);
  Tensor<T> y({static_cast<std::size_t>(c_out), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        T acc = bias[o];
        for (int c = 0; c < c_in; ++c) {
          for (int u = 0; u < kh; ++u) {
            const int ih = i * stride - pad.top + u;
            if (ih < 0 || ih >= h) continue;
            for (int v = 0; v < kw; ++v) {
              const int iw = j * stride - pad.left + v;
              if (iw < 0 || iw >= w) continue;
              acc += weight[((o * c_in + c) * kh + u) * kw + v] * x.at(c, ih, iw);
            }
          }
        }
        y.at(o, i, j) = acc;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, Padding pad,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const int c_in = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const int c_out = static_cast<int>(weight.dim(0)), kh = static_cast<int>(weight.dim(2)),
            kw = static_cast<int>(weight.dim(3));
  const int oh = static_cast<int>(dy.dim(1)), ow = static_cast<int>(dy.dim(2));
  if (dx) *dx = Tensor<T>(x.shape());
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const T g = dy.at(o, i, j);
        if (dbias) (*dbias)[o] += g;
        for (int c = 0; c < c_in; ++c) {
          for (int u = 0; u < kh; ++u) {
            const int ih = i * stride - pad.top + u;
            if (ih < 0 || ih >= h) continue;
            for (int v = 0; v < kw; ++v) {
              const int iw = j * stride - pad.left + v;
              if (iw < 0 || iw >= w) continue;
              const std::size_t wi = ((o * c_in + c) * kh + u) * kw + v;
              if (dweight) (*dweight)[wi] += g * x.at(c, ih, iw);
              if (dx) dx->at(c, ih, iw) += g * weight[wi];
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnSpec& spec) {
  const int c_count = static_cast<int>(x.dim(0));
  const int half = spec.size / 2;
  Tensor<T> y(x.shape());
  for (int c = 0; c < c_count; ++c) {
    for (std::size_t i = 0; i < x.dim(1); ++i) {
      for (std::size_t j = 0; j < x.dim(2); ++j) {
        double acc = 0;
        for (int d = -half; d <= half; ++d) {
          if (c + d < 0 || c + d >= c_count) continue;
          const double v = x.at(c + d, i, j);
          acc += v * v;
        }
        const double base = spec.k + spec.alpha / spec.size * acc;
        y.at(c, i, j) = static_cast<T>(x.at(c, i, j) / std::pow(base, spec.beta));
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride) {
  const int oh = window_output(static_cast<int>(x.dim(1)), 0, 0, window, stride);
  const int ow = window_output(static_cast<int>(x.dim(2)), 0, 0, window, stride);
  Tensor<T> y({x.dim(0), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        T m = -std::numeric_limits<T>::infinity();
        for (int u = 0; u < window; ++u)
          for (int v = 0; v < window; ++v) m = std::max(m, x.at(c, i * stride + u, j * stride + v));
        y.at(c, i, j) = m;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  Tensor<T> y({out});
  for (std::size_t o = 0; o < out; ++o) {
    T acc = bias[o];
    for (std::size_t i = 0; i < in; ++i) acc += weight[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

#define EANET_INSTANTIATE(T)                                                                     \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                    Padding);                                                    \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, int, Padding,              \
                                const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);          \
  template Tensor<T> lrn_forward(const Tensor<T>&, const LrnSpec&);                              \
  template Tensor<T> maxpool_forward(const Tensor<T>&, int, int);                                \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

EANET_INSTANTIATE(float)
EANET_INSTANTIATE(double)
#undef EANET_INSTANTIATE

}  // namespace eanet::reference
