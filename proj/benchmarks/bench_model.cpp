#include "s2m/model.hpp"

#include <benchmark/benchmark.h>

using namespace s2m;

namespace {

void BM_desk_forward(benchmark::State& state)
{
    Model model = Model::build(ModelConfig::desk());
    model.eval();
    const Tensor x = Tensor::full({4, 3, 64, 64}, 0.5, Dtype::f32);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}

void BM_desk_train_step(benchmark::State& state)
{
    Model model = Model::build(ModelConfig::desk());
    model.train();
    const Tensor x = Tensor::full({4, 3, 64, 64}, 0.5, Dtype::f32);
    for (auto _ : state) {
        model.parameters().zero_grad();
        Tape tape;
        tape.backward(mean(model.forward(x).prediction));
    }
}

}  // namespace

BENCHMARK(BM_desk_forward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_desk_train_step)->Unit(benchmark::kMillisecond);
