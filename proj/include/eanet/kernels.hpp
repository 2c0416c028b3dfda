#pragma once

#include <cstdint>
#include <vector>

#include "eanet/tensor.hpp"

namespace eanet {

/// Zero padding per side, in pixels.
struct Padding {
  int top = 0;
  int left = 0;
  int bottom = 0;
  int right = 0;

  static constexpr Padding uniform(int p) { return {p, p, p, p}; }
  friend bool operator==(const Padding&, const Padding&) = default;
};

/// Cross-channel local response normalization:
/// y_c = x_c / (k + alpha / size * sum_{|c'-c| <= size/2} x_{c'}^2)^beta
struct LrnSpec {
  int size = 5;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

/// Output extent of a strided window over `extent` input pixels; throws when
/// the padded input is smaller than the window.
int window_output(int extent, int pad_lo, int pad_hi, int window, int stride);

namespace kernels {

// Optimized kernels. Convolution lowers to im2col + GEMM; element-wise and
// per-channel loops are OpenMP-parallel.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, Padding pad);

/// dx is overwritten (skipped when null); dweight and dbias are accumulated.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, Padding pad,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// Gradient through ReLU given its output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// `scale` receives the per-element denominator base (k + alpha/size * window sum).
template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnSpec& spec, Tensor<T>* scale);

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& x, const Tensor<T>& scale, const LrnSpec& spec,
                       const Tensor<T>& dy);

/// Max pooling without padding; `argmax` holds flat input indices per output.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride,
                          std::vector<std::uint32_t>* argmax);

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                           const std::vector<std::size_t>& input_shape);

/// y = W x + b with W stored [out, in].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

}  // namespace kernels

namespace reference {

// Direct serial loops, kept as the ground truth for the optimized kernels.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, Padding pad);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, Padding pad,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnSpec& spec);

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride);

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace reference

}  // namespace eanet
