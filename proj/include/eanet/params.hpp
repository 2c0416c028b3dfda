#pragma once

#include <cmath>
#include <random>
#include <string>

#include "eanet/tensor.hpp"

namespace eanet {

using Rng = std::mt19937_64;

template <typename T>
void fill_normal(Tensor<T>& t, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(normal(rng));
}

/// Convolution weights [out, in, kh, kw] and bias [out].
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;

  static ConvParams he_normal(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw,
                              Rng& rng) {
    ConvParams p{Tensor<T>({out, in, kh, kw}), Tensor<T>({out})};
    fill_normal(p.weight, std::sqrt(2.0 / static_cast<double>(in * kh * kw)), rng);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

/// Fully connected weights [out, in] and bias [out].
template <typename T>
struct LinearParams {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  static LinearParams normal(std::size_t out, std::size_t in, double stddev, Rng& rng) {
    LinearParams p{Tensor<T>({out, in}), Tensor<T>({out})};
    fill_normal(p.weight, stddev, rng);
    return p;
  }
  static LinearParams he_normal(std::size_t out, std::size_t in, Rng& rng) {
    return normal(out, in, std::sqrt(2.0 / static_cast<double>(in)), rng);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

/// Zero-filled bundle with the same structure, used as a gradient accumulator.
template <class P>
P zeros_like_params(const P& params) {
  P out = params;
  out.visit("", [](const std::string&, auto& t) { t.fill(0); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  params.visit("", [&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

}  // namespace eanet
