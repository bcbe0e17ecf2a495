#include <benchmark/benchmark.h>

#include "hegs/config.hpp"
#include "hegs/eval.hpp"
#include "hegs/optim.hpp"

using namespace hegs;

namespace {

ModelConfig desk_model() { return RunConfig::desk_profile().model; }

std::pair<Tensor, std::vector<GtInstances>> desk_batch(int n) {
    SyntheticSceneConfig cfg;
    cfg.seed = 1;
    std::vector<DetectionSample> samples;
    std::vector<GtInstances> gts;
    for (int i = 0; i < n; ++i) {
        samples.push_back(generate_synthetic_scene(cfg, i));
        gts.push_back(samples.back().gt);
    }
    return {stack_images(samples), gts};
}

void BM_InferenceForward(benchmark::State& state) {
    nn::HegsDetr model(desk_model(), 1);
    model.set_training(false);
    auto [images, gts] = desk_batch(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto out = inference_forward(model, images);
        benchmark::DoNotOptimize(out.stages.back().logits.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_InferenceForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    nn::HegsDetr model(desk_model(), 1);
    Adam opt(model.named_parameters(), AdamConfig{});
    auto [images, gts] = desk_batch(8);
    SqrOptions opts;
    for (auto _ : state) {
        opt.zero_grad();
        auto loss = sqr_training_loss(model, images, gts, opts);
        Tensor t = loss.total;
        t.backward();
        opt.step();
        benchmark::DoNotOptimize(loss.items.data());
    }
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_SyntheticScene(benchmark::State& state) {
    SyntheticSceneConfig cfg;
    int64_t i = 0;
    for (auto _ : state) {
        auto s = generate_synthetic_scene(cfg, i++);
        benchmark::DoNotOptimize(s.image.data());
    }
}
BENCHMARK(BM_SyntheticScene);

} // namespace
