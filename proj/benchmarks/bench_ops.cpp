#include <benchmark/benchmark.h>

#include "vbs/model.hpp"
#include "vbs/ops.hpp"
#include "vbs/rng.hpp"

using namespace vbs;
namespace o = vbs::ops;

namespace {

TensorPtr rand_tensor(const Shape& shape, SeededRng& rng) {
    auto t = make_tensor(shape);
    for (auto& v : t->values) v = rng.uniform(-1, 1);
    return t;
}

void bm_matmul(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    SeededRng rng(1);
    auto a = rand_tensor({n, n}, rng);
    auto b = rand_tensor({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(o::matmul(a, b)->values.data());
    state.SetItemsProcessed(state.iterations() * n * n * n);
}

void bm_conv2d(benchmark::State& state) {
    SeededRng rng(2);
    auto input = rand_tensor({32, 64, 64}, rng);
    auto kern = rand_tensor({32, 32, 3, 3}, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(o::conv2d(input, kern, nullptr, 1, 1)->values.data());
}

void bm_softmax(benchmark::State& state) {
    SeededRng rng(3);
    auto t = rand_tensor({257, 257}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(o::softmax(t, 1)->values.data());
}

void bm_forward_backward_desk(benchmark::State& state) {
    auto cfg = model_preset("vit-desk");
    SeededRng rng(4);
    ParameterSet params;
    init_model_params(cfg, params, rng);
    auto image = rand_tensor({cfg.encoder.channels, cfg.encoder.height, cfg.encoder.width}, rng);
    for (auto _ : state) {
        auto out = model_forward(image, cfg, params);
        auto loss = o::mean(out.probs);
        backward(loss);
        params.zero_grads();
        benchmark::DoNotOptimize(loss->values[0]);
    }
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(256);
BENCHMARK(bm_conv2d);
BENCHMARK(bm_softmax);
BENCHMARK(bm_forward_backward_desk)->Unit(benchmark::kSecond);

BENCHMARK_MAIN();
