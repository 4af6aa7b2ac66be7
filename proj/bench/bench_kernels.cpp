#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "ssmnet/diffcore.hpp"
#include "ssmnet/encoder.hpp"
#include "ssmnet/kernels.hpp"
#include "ssmnet/reference.hpp"
#include "ssmnet/ssm.hpp"

using namespace ssmnet;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

Tensor<float> random_tensor(Shape s, std::uint64_t seed) {
  const auto n = s.numel();
  return Tensor<float>(std::move(s), random_vec(n, seed));
}

// Layer shapes of the default encoder: (c_in, c_out, H, W).
constexpr int kLayers[3][4] = {{1, 32, 72, 64}, {32, 64, 36, 16}, {64, 128, 12, 4}};

void set_threads(const benchmark::State& state, int arg) {
  omp_set_num_threads(int(state.range(arg)));
}

// GEMM shaped like each conv layer: [c_out, c_in*24] x [c_in*24, H*W].
void BM_GemmParallel(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  set_threads(state, 1);
  const int M = l[1], K = l[0] * kConvKernelH * kConvKernelW, N = l[2] * l[3];
  const auto A = random_vec(std::size_t(M) * K, 1), B = random_vec(std::size_t(K) * N, 2);
  std::vector<float> C(std::size_t(M) * N);
  for (auto _ : state) {
    kernels::gemm_nn(M, N, K, A.data(), B.data(), C.data(), false);
    benchmark::DoNotOptimize(C.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(M) * N * K);
}
BENCHMARK(BM_GemmParallel)->ArgsProduct({{0, 1, 2}, {1, 2, 4}})->ArgNames({"layer", "threads"})->UseRealTime();

void BM_GemmReference(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  const int M = l[1], K = l[0] * kConvKernelH * kConvKernelW, N = l[2] * l[3];
  const auto A = random_vec(std::size_t(M) * K, 1), B = random_vec(std::size_t(K) * N, 2);
  std::vector<float> C(std::size_t(M) * N);
  for (auto _ : state) {
    reference::gemm(M, N, K, A.data(), B.data(), C.data());
    benchmark::DoNotOptimize(C.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(M) * N * K);
}
BENCHMARK(BM_GemmReference)->DenseRange(0, 2)->ArgName("layer");

// im2col + GEMM through the tape versus the direct loop nest.
void BM_ConvForwardParallel(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  set_threads(state, 1);
  const auto x = random_tensor({l[0], l[2], l[3]}, 3);
  const auto w = random_tensor({l[1], l[0], kConvKernelH, kConvKernelW}, 4);
  const auto b = random_tensor({l[1]}, 5);
  Tape<float> tape;
  for (auto _ : state) {
    tape.reset();
    const auto y = tape.conv2d(tape.parameter(x, false), tape.parameter(w, false), tape.parameter(b, false));
    benchmark::DoNotOptimize(tape.value(y).data());
  }
}
BENCHMARK(BM_ConvForwardParallel)->ArgsProduct({{0, 1, 2}, {1, 2, 4}})->ArgNames({"layer", "threads"})->UseRealTime();

void BM_ConvForwardReference(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  const auto x = random_tensor({l[0], l[2], l[3]}, 3);
  const auto w = random_tensor({l[1], l[0], kConvKernelH, kConvKernelW}, 4);
  const auto b = random_tensor({l[1]}, 5);
  for (auto _ : state) {
    auto y = reference::conv2d_forward(x, w, b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForwardReference)->DenseRange(0, 2)->ArgName("layer");

void BM_ConvBackwardReference(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  const auto x = random_tensor({l[0], l[2], l[3]}, 3);
  const auto w = random_tensor({l[1], l[0], kConvKernelH, kConvKernelW}, 4);
  const auto g = random_tensor({l[1], l[2], l[3]}, 6);
  for (auto _ : state) {
    auto grads = reference::conv2d_backward(x, w, g);
    benchmark::DoNotOptimize(grads.weight.data());
  }
}
BENCHMARK(BM_ConvBackwardReference)->DenseRange(0, 2)->ArgName("layer");

void BM_ConvBackwardParallel(benchmark::State& state) {
  const auto* l = kLayers[state.range(0)];
  set_threads(state, 1);
  const auto x = random_tensor({l[0], l[2], l[3]}, 3);
  const auto w = random_tensor({l[1], l[0], kConvKernelH, kConvKernelW}, 4);
  const auto b = random_tensor({l[1]}, 5);
  const auto g = random_tensor({l[1], l[2], l[3]}, 6);
  Tape<float> tape;
  for (auto _ : state) {
    tape.reset();
    const auto y = tape.conv2d(tape.input(x), tape.parameter(w), tape.parameter(b));
    tape.backward(y, g);
    benchmark::DoNotOptimize(tape.size());
  }
}
BENCHMARK(BM_ConvBackwardParallel)->ArgsProduct({{0, 1, 2}, {1, 2, 4}})->ArgNames({"layer", "threads"})->UseRealTime();

void BM_EncodeTrack(benchmark::State& state) {
  set_threads(state, 1);
  const auto params = init_params(1);
  PatchSequence p;
  const std::size_t T = 16;
  p.data = Matrix<float>(T * kCqtBins, kPatchCols, random_vec(T * kCqtBins * kPatchCols, 7));
  for (auto _ : state) {
    auto e = encode(p, params);
    benchmark::DoNotOptimize(e.vectors.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(T));
}
BENCHMARK(BM_EncodeTrack)->Arg(1)->Arg(2)->Arg(4)->ArgName("threads")->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_Similarity(benchmark::State& state) {
  const std::size_t T = std::size_t(state.range(0));
  Matrix<float> e(T, kEmbeddingDim, random_vec(T * kEmbeddingDim, 8));
  for (std::size_t i = 0; i < T; ++i) {
    double n = 0.0;
    for (float v : e.row(i)) n += double(v) * v;
    for (float& v : e.row(i)) v = float(v / std::sqrt(n));
  }
  const bool ref = state.range(1) == 1;
  for (auto _ : state) {
    if (ref) {
      auto s = reference::similarity(e);
      benchmark::DoNotOptimize(s.data());
    } else {
      auto s = similarity_matrix(e);
      benchmark::DoNotOptimize(s.values.data());
    }
  }
}
BENCHMARK(BM_Similarity)->ArgsProduct({{64, 256}, {0, 1}})->ArgNames({"T", "reference"});

}  // namespace

BENCHMARK_MAIN();
