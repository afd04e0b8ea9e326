#include "s2m/fft.hpp"
#include "s2m/rng.hpp"

#include <benchmark/benchmark.h>

using namespace s2m;

namespace {

Tensor noise(std::size_t n)
{
    Rng rng(n);
    std::vector<double> v(n * n);
    for (double& x : v) x = rng.uniform(-1, 1);
    return Tensor::from_data({n, n}, std::move(v));
}

void BM_fft2d(benchmark::State& state)
{
    const Tensor x = noise(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fft2d(x));
    state.SetComplexityN(state.range(0) * state.range(0));
}

}  // namespace

// Powers of two take the radix-2 path, the rest go through Bluestein.
BENCHMARK(BM_fft2d)->Arg(64)->Arg(128)->Arg(176)->Arg(256)->Arg(352)->Complexity(benchmark::oNLogN);
