#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "medsynth/context_unet.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/diffusion.hpp"
#include "medsynth/eval_harness.hpp"
#include "medsynth/image_metrics.hpp"
#include "medsynth/schedule.hpp"

namespace {

using namespace medsynth;

ImageTensor noise_image(int size, Rng& rng) {
    ImageTensor img(size, size);
    for (double& v : img.values) v = rng.normal();
    return img;
}

NetworkInput batch_input(int batch, int size, int n_classes, Rng& rng) {
    NetworkInput in;
    in.steps = kDefaultSteps;
    std::vector<int> labels;
    for (int i = 0; i < batch; ++i) {
        in.xt.push_back(noise_image(size, rng));
        in.t.push_back(1 + i % kDefaultSteps);
        in.mask.keep.push_back(1);
        labels.push_back(i % n_classes);
    }
    in.classes = OneHotBatch::from_labels(labels, n_classes);
    return in;
}

// Args: batch, image size, base channels.
void BM_Forward(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
    const NetworkParams p = init_network({4, static_cast<int>(state.range(2)), size, 16}, 1);
    Rng rng(2);
    const NetworkInput in = batch_input(batch, size, 4, rng);
    for (auto _ : state) benchmark::DoNotOptimize(forward(p, in));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Args({1, 16, 8})->Args({8, 16, 8})->Args({8, 32, 16})->Args({16, 64, 32})->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const LabeledImageSet toy = make_toy_shapes(32, size, 1);
    NetworkParams p = init_network({2, static_cast<int>(state.range(1)), size, 16}, 1);
    std::vector<ImageTensor> images;
    for (const auto& img : toy.images) images.push_back(to_model_range(img));
    const NoiseSchedule s = build_schedule();
    TrainConfig cfg;
    AdamState adam = AdamState::for_params(p);
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(train_step(p, images, toy.labels, s, cfg, adam, rng));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(images.size()));
}
BENCHMARK(BM_TrainStep)->Args({16, 8})->Args({32, 16})->Unit(benchmark::kMillisecond);

// One guided denoising step per image: sampling cost scales with T times this.
void BM_GuidedSampleStep(benchmark::State& state) {
    const NetworkParams p = init_network({2, 8, 16, 16}, 1);
    const NoiseSchedule s = build_schedule(1);
    const int count = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(sample(p, s, 1, count, {2.0, 0}, 5));
    state.SetItemsProcessed(state.iterations() * count);
}
BENCHMARK(BM_GuidedSampleStep)->Arg(1)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    Rng rng(4);
    const ImageTensor a = to_file_range(noise_image(size, rng)), b = to_file_range(noise_image(size, rng));
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(16)->Arg(64)->Arg(256);

void BM_FrechetDistance(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(5);
    std::vector<ImageTensor> a, b;
    for (int i = 0; i < n; ++i) {
        a.push_back(noise_image(64, rng));
        b.push_back(noise_image(64, rng));
    }
    const Pool8Extractor pool8;
    const FrechetStats sa = gaussian_stats(extract_features(pool8, a)), sb = gaussian_stats(extract_features(pool8, b));
    for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(sa, sb));
}
BENCHMARK(BM_FrechetDistance)->Arg(128)->Unit(benchmark::kMillisecond);

LabeledTextSet synthetic_corpus(int per_class) {
    static const char* vocab[] = {"tired", "happy", "alone", "great", "empty", "friends", "sleep", "pain",
                                  "sun",   "work",  "cry",   "laugh", "lost",  "home",    "music", "dark"};
    LabeledTextSet s{{}, {}, {"0", "1", "2", "3"}};
    Rng rng(6);
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < per_class; ++i) {
            std::string text = vocab[c * 4 + i % 4];
            for (int w = 0; w < 12; ++w) text += std::string(" ") + vocab[rng.uniform_index(16)];
            s.push_back(text, c);
        }
    return s;
}

void BM_BaselineTrain(benchmark::State& state) {
    const LabeledTextSet set = synthetic_corpus(static_cast<int>(state.range(0)));
    const BaselineClassifier clf;
    for (auto _ : state) benchmark::DoNotOptimize(clf.train(set, 1));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(set.size()));
}
BENCHMARK(BM_BaselineTrain)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
