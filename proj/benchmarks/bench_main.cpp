#include <benchmark/benchmark.h>

#include <span>
#include <vector>

#include "vcf/cnn.hpp"
#include "vcf/nn/ops.hpp"
#include "vcf/nn/optim.hpp"
#include "vcf/phantom.hpp"
#include "vcf/rnn.hpp"
#include "vcf/segmentation.hpp"

using namespace vcf;

namespace {

nn::Tensor<float> random_tensor(nn::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

// args: batch, in channels, out channels; 32x32 planes
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1)), cout = static_cast<std::size_t>(state.range(2));
  const auto x = random_tensor({n, cin, 32, 32}, 1);
  const auto w = random_tensor({cout, cin, 3, 3}, 2);
  const auto b = random_tensor({cout}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Conv2dForward)->Args({1, 1, 32})->Args({16, 32, 64})->Args({16, 64, 64})->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({n, 32, 32, 32}, 1);
  const auto w = random_tensor({64, 32, 3, 3}, 2);
  const auto dy = random_tensor({n, 64, 32, 32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, w, dy));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Conv2dBackward)->Arg(1)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_MaxPool3(benchmark::State& state) {
  const auto x = random_tensor({16, 64, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::maxpool3(x));
}
BENCHMARK(BM_MaxPool3)->Unit(benchmark::kMicrosecond);

// one SGD step of the patch classifier on a batch of state.range(0) patches
void BM_CnnTrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  cls::CnnModel cnn(0.5, 5);
  cnn.initialize(5);
  nn::Sgd<float> opt(0.01, 0.9);
  auto x = random_tensor({n, 1, 32, 32}, 6);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  for (auto _ : state) {
    cnn.network().zero_grad();
    const auto p = nn::softmax(cnn.logits(x, nn::Mode::Train));
    cnn.backward(nn::softmax_cross_entropy_backward(p, std::span<const int>(labels)));
    opt.step(cnn.params());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_CnnTrainStep)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CnnPredict(benchmark::State& state) {
  cls::CnnModel cnn;
  cnn.initialize(7);
  const auto x = random_tensor({static_cast<std::size_t>(state.range(0)), 1, 32, 32}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(cnn.logits(x, nn::Mode::Eval));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CnnPredict)->Arg(1)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_RnnForwardBackward(benchmark::State& state) {
  cls::RnnModel rnn;
  rnn.initialize(9);
  Rng rng(9);
  std::vector<float> seq(static_cast<std::size_t>(state.range(0)));
  for (auto& v : seq) v = static_cast<float>(rng.uniform());
  const std::vector<int> label{1};
  for (auto _ : state) {
    rnn.zero_grad();
    const auto p = nn::softmax(rnn.logits(seq));
    rnn.backward(nn::softmax_cross_entropy_backward(p, std::span<const int>(label)));
  }
}
BENCHMARK(BM_RnnForwardBackward)->Arg(12)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_PhantomGenerate(benchmark::State& state) {
  phantom::PhantomSpec spec;
  spec.scoliosis_amplitude_mm = 8.0;
  spec.fracture_plan = {{4, 0.4}};
  for (auto _ : state) {
    spec.seed += 1;
    benchmark::DoNotOptimize(phantom::generate_phantom(spec));
  }
}
BENCHMARK(BM_PhantomGenerate)->Unit(benchmark::kMillisecond);

void BM_SegmentVolume(benchmark::State& state) {
  phantom::PhantomSpec spec;
  spec.scoliosis_amplitude_mm = 8.0;
  spec.seed = 11;
  const auto ph = phantom::generate_phantom(spec);
  for (auto _ : state) benchmark::DoNotOptimize(seg::segment_volume(ph.volume));
}
BENCHMARK(BM_SegmentVolume)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
