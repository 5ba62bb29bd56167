#include <benchmark/benchmark.h>

#include "ecgt/dsp.hpp"
#include "ecgt/model.hpp"
#include "ecgt/quant.hpp"
#include "ecgt/rng.hpp"
#include "ecgt/synth.hpp"
#include "ecgt/training.hpp"

namespace {

ecgt::ModelParams make_params() {
  return ecgt::ModelParams::glorot_init(ecgt::ModelConfig{}, 7);
}

std::vector<double> make_window(uint64_t seed) {
  ecgt::Rng rng(seed);
  std::vector<double> w(198);
  for (double& v : w) v = rng.normal(0.0, 0.4);
  return w;
}

void BM_float_forward(benchmark::State& state) {
  const auto params = make_params();
  const auto window = make_window(1);
  for (auto _ : state) {
    auto logits = ecgt::forward(window, {0.1, -0.2}, params);
    benchmark::DoNotOptimize(logits);
  }
}
BENCHMARK(BM_float_forward);

void BM_loss_and_grad_single(benchmark::State& state) {
  const auto params = make_params();
  ecgt::BeatSample s;
  const auto w = make_window(2);
  for (int i = 0; i < 198; ++i) s.window[size_t(i)] = float(w[size_t(i)]);
  s.rr_norm = {0.1f, -0.2f};
  for (auto _ : state) {
    ecgt::GradientSet g = ecgt::GradientSet::zeros(params.cfg);
    ecgt::sample_grad(params, s, g);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_loss_and_grad_single);

void BM_int_forward(benchmark::State& state) {
  const auto params = make_params();
  ecgt::BeatSample s;
  const auto w = make_window(3);
  for (int i = 0; i < 198; ++i) s.window[size_t(i)] = float(w[size_t(i)]);
  s.rr_norm = {0.1f, -0.2f};
  const auto scales = ecgt::calibrate(params, {&s}, 1);
  const auto qm = ecgt::build_quantized(params, scales);
  const auto wq = ecgt::quantize_window(s.window, qm.scales.input);
  const auto rq = ecgt::quantize_rr(s.rr_norm, qm.scales.rr);
  for (auto _ : state) {
    auto logits = ecgt::int_forward(wq, rq, qm.cfg, qm.im);
    benchmark::DoNotOptimize(logits);
  }
}
BENCHMARK(BM_int_forward);

void BM_denoise_10s(benchmark::State& state) {
  auto rec = ecgt::synth_record("bench", 5, ecgt::SynthSpec{.duration_s = 10.0});
  const auto mv = rec.channel_mv(0);
  for (auto _ : state) {
    auto out = ecgt::denoise(mv, 360.0);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_denoise_10s);

void BM_pan_tompkins_60s(benchmark::State& state) {
  auto rec = ecgt::synth_record("bench", 6, ecgt::SynthSpec{.duration_s = 60.0});
  const auto mv = ecgt::denoise(rec.channel_mv(0), 360.0);
  for (auto _ : state) {
    auto peaks = ecgt::pan_tompkins(mv, 360.0);
    benchmark::DoNotOptimize(peaks);
  }
}
BENCHMARK(BM_pan_tompkins_60s);

}  // namespace

BENCHMARK_MAIN();
