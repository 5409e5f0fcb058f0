// Optimized (OpenMP + GEMM) kernels against the direct reference loops.

#include <benchmark/benchmark.h>

#include <vector>

#include "dpnpose/kernels.hpp"
#include "dpnpose/reference.hpp"
#include "dpnpose/rng.hpp"

using namespace dpnpose;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// args: channels, spatial size, kernel, groups
ConvGeometry geometry(const benchmark::State& state) {
  ConvGeometry g;
  g.in_channels = g.out_channels = static_cast<int>(state.range(0));
  g.in_h = g.in_w = static_cast<int>(state.range(1));
  g.kernel_h = g.kernel_w = static_cast<int>(state.range(2));
  g.padding = same_padding(g.kernel_h);
  g.groups = static_cast<int>(state.range(3));
  return g;
}

struct ConvData {
  explicit ConvData(const ConvGeometry& g)
      : input(random_vec(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1)),
        weight(random_vec(static_cast<std::size_t>(g.out_channels) * g.in_per_group() * g.kernel_h * g.kernel_w, 2)),
        bias(random_vec(g.out_channels, 3)),
        output(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_h() * g.out_w()),
        grad_output(random_vec(output.size(), 4)),
        grad_input(input.size()),
        grad_weight(weight.size()),
        grad_bias(bias.size()) {}
  std::vector<float> input, weight, bias, output, grad_output, grad_input, grad_weight, grad_bias;
};

void set_macs(benchmark::State& state, const ConvGeometry& g) {
  const double macs = static_cast<double>(g.out_channels) * g.in_per_group() * g.kernel_h * g.kernel_w *
                      g.out_h() * g.out_w();
  state.counters["GMAC/s"] = benchmark::Counter(macs * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Reference>
void conv_forward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  ConvData d(g);
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::conv2d_forward<float>(g, d.input, d.weight, d.bias, d.output);
    } else {
      kernels::conv2d_forward<float>(g, d.input, d.weight, d.bias, d.output);
    }
    benchmark::DoNotOptimize(d.output.data());
  }
  set_macs(state, g);
}

template <bool Reference>
void conv_backward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  ConvData d(g);
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::conv2d_backward<float>(g, d.input, d.weight, d.grad_output, d.grad_input, d.grad_weight, d.grad_bias);
    } else {
      kernels::conv2d_backward<float>(g, d.input, d.weight, d.grad_output, d.grad_input, d.grad_weight, d.grad_bias);
    }
    benchmark::DoNotOptimize(d.grad_input.data());
  }
  set_macs(state, g);
}

template <bool Reference>
void max_pool(benchmark::State& state) {
  const int planes = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const auto x = random_vec(static_cast<std::size_t>(planes) * hw * hw, 5);
  std::vector<float> y(static_cast<std::size_t>(planes) * (hw / 2) * (hw / 2));
  std::vector<std::int32_t> argmax(y.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::max_pool2x2_forward<float>(planes, hw, hw, x, y);
    } else {
      kernels::max_pool2x2_forward<float>(planes, hw, hw, x, y, argmax);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->ArgNames({"C", "HW", "k", "G"});
  b->Args({64, 32, 3, 1});
  b->Args({128, 23, 3, 1});
  b->Args({128, 23, 1, 1});
  b->Args({256, 23, 3, 32});
  b->Args({128, 23, 7, 1});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/kernels")->Apply(conv_args);
BENCHMARK(conv_forward<true>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(conv_backward<false>)->Name("conv_backward/kernels")->Apply(conv_args);
BENCHMARK(conv_backward<true>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(max_pool<false>)->Name("max_pool2x2/kernels")->Args({64, 92});
BENCHMARK(max_pool<true>)->Name("max_pool2x2/reference")->Args({64, 92});

BENCHMARK_MAIN();
