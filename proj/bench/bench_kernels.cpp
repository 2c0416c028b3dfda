// Optimized kernels against the serial reference loops on backbone-sized inputs.

#include <benchmark/benchmark.h>

#include <random>

#include "eanet/kernels.hpp"

namespace {

using eanet::Padding;
using eanet::Tensor;

Tensor<float> random(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// {in_channels, out_channels, size, kernel, stride}; first two backbone layers at 107 px.
struct ConvShape {
  std::size_t cin, cout, hw, k;
  int stride;
};
constexpr ConvShape kConv[] = {{3, 96, 107, 7, 2}, {96, 256, 25, 5, 2}};

template <bool Optimized>
void BM_Conv(benchmark::State& state) {
  const ConvShape s = kConv[state.range(0)];
  const auto x = random({s.cin, s.hw, s.hw}, 1);
  const auto w = random({s.cout, s.cin, s.k, s.k}, 2);
  const auto b = random({s.cout}, 3);
  for (auto _ : state) {
    auto y = Optimized ? eanet::kernels::conv2d_forward(x, w, b, s.stride, Padding{})
                       : eanet::reference::conv2d_forward(x, w, b, s.stride, Padding{});
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv<true>)->Name("conv2d/optimized")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv<false>)->Name("conv2d/reference")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

template <bool Optimized>
void BM_Lrn(benchmark::State& state) {
  const auto x = random({96, 51, 51}, 4);
  const eanet::LrnSpec spec;
  Tensor<float> scale;
  for (auto _ : state) {
    auto y = Optimized ? eanet::kernels::lrn_forward(x, spec, &scale) : eanet::reference::lrn_forward(x, spec);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Lrn<true>)->Name("lrn/optimized")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Lrn<false>)->Name("lrn/reference")->Unit(benchmark::kMicrosecond);

template <bool Optimized>
void BM_MaxPool(benchmark::State& state) {
  const auto x = random({96, 51, 51}, 5);
  std::vector<std::uint32_t> argmax;
  for (auto _ : state) {
    auto y = Optimized ? eanet::kernels::maxpool_forward(x, 3, 2, &argmax) : eanet::reference::maxpool_forward(x, 3, 2);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_MaxPool<true>)->Name("maxpool/optimized")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxPool<false>)->Name("maxpool/reference")->Unit(benchmark::kMicrosecond);

template <bool Optimized>
void BM_Linear(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto x = random({in}, 6);
  const auto w = random({512, in}, 7);
  const auto b = random({512}, 8);
  for (auto _ : state) {
    auto y = Optimized ? eanet::kernels::linear_forward(x, w, b) : eanet::reference::linear_forward(x, w, b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Linear<true>)->Name("linear/optimized")->Arg(512)->Arg(4608)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Linear<false>)->Name("linear/reference")->Arg(512)->Arg(4608)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
