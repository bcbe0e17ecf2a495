#include <benchmark/benchmark.h>

#include "hegs/backbone.hpp"
#include "hegs/neck.hpp"

using namespace hegs;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.normal() * scale;
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const int64_t c = state.range(0), s = state.range(1);
    Tensor x = random_tensor({8, c, s, s}, 1);
    Tensor w = random_tensor({c, c, 3, 3}, 2, 0.1);
    Tensor b = random_tensor({c}, 3, 0.1);
    for (auto _ : state) {
        Tensor y = ops::conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * 8 * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 32})->Args({64, 16})->Args({128, 8});

void BM_ConvBackward(benchmark::State& state) {
    const int64_t c = state.range(0), s = state.range(1);
    Tensor w = random_tensor({c, c, 3, 3}, 2, 0.1);
    w.set_requires_grad(true);
    for (auto _ : state) {
        Tensor x = random_tensor({8, c, s, s}, 1);
        x.set_requires_grad(true);
        Tensor loss = ops::sum_all(ops::conv2d(x, w, Tensor(), 1, 1));
        loss.backward();
        benchmark::DoNotOptimize(x.grad_data());
    }
}
BENCHMARK(BM_ConvBackward)->Args({32, 32})->Args({64, 16});

void BM_FreqGate(benchmark::State& state) {
    const int64_t c = state.range(0), s = state.range(1);
    Tensor x = random_tensor({8, c, s, s}, 4);
    Tensor g = Tensor::full({c, 8, 8}, 1.0);
    for (auto _ : state) {
        Tensor y = ops::freq_gate(x, g);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_FreqGate)->Args({32, 16})->Args({64, 8});

void BM_Attention(benchmark::State& state) {
    const int64_t tokens = state.range(0);
    Rng rng(5);
    nn::MultiheadAttention mha(64, 4, rng);
    Tensor x = random_tensor({8, tokens, 64}, 6, 0.5);
    for (auto _ : state) {
        Tensor y = mha.forward(x, x, x);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(256);

void BM_FcaBlock(benchmark::State& state) {
    Rng rng(7);
    nn::FcaBlock fca(64, 4, rng);
    Tensor x = random_tensor({8, 64, 8, 8}, 8, 0.5);
    for (auto _ : state) {
        Tensor y = fca.forward(x);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_FcaBlock);

void BM_OmniKernel(benchmark::State& state) {
    Rng rng(9);
    nn::OmniKernel omni(32, static_cast<int>(state.range(0)), rng);
    Tensor x = random_tensor({8, 32, 16, 16}, 10, 0.5);
    for (auto _ : state) {
        Tensor y = omni.forward(x);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_OmniKernel)->Arg(7)->Arg(31);

} // namespace

BENCHMARK_MAIN();
