#include "s2m/blocks.hpp"

#include <benchmark/benchmark.h>

using namespace s2m;

namespace {

void BM_sstm_forward(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    ParameterSet params;
    Rng rng(1);
    Sstm block = Sstm::create(params, "s", {.channels = 16, .k = 32}, n, n, rng);
    std::vector<double> v(16 * n * n);
    for (double& x : v) x = rng.uniform(-1, 1);
    const Tensor x = Tensor::from_data({1, 16, n, n}, std::move(v));
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(block.forward(x, {}));
    state.SetComplexityN(state.range(0) * state.range(0));
}

}  // namespace

BENCHMARK(BM_sstm_forward)->Arg(64)->Arg(128)->Arg(256)->Complexity(benchmark::oNLogN)->Unit(benchmark::kMillisecond);
