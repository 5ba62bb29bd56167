#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ecgt/dataset.hpp"
#include "ecgt/model.hpp"

namespace ecgt {

struct PlateauSpec {
  double factor = 0.5;
  int patience = 10;
  double min_lr = 1e-5;
  double improvement = 1e-4;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double lr0 = 2e-3;
  PlateauSpec plateau;
  uint64_t seed = 0;
  bool use_rr = true;
  bool use_denoising = true;
  NoiseMode noise_mode = NoiseMode::none;
  int threads = 1;
};

// Same tensor layout as the parameters themselves.
using GradientSet = ModelParams;

// Mean softmax cross-entropy over the batch plus exact reverse-mode
// gradients through every layer. Per-sample gradients are combined by a
// pairwise tree over sample indices, so the result is identical for any
// thread count.
double loss_and_grad(const ModelParams& params,
                     const std::vector<const BeatSample*>& batch, GradientSet& grads,
                     int threads = 1);

// single-sample pieces, exposed for the finite-difference oracles
double sample_loss(const ModelParams& params, const BeatSample& s);
void sample_grad(const ModelParams& params, const BeatSample& s, GradientSet& grads);

// internals shared with the quantization-aware trainer
std::vector<double> ce_logit_grad(const std::vector<double>& logits, int label, double* loss);
void backward_from_logits(const ModelParams& p, const ForwardCache& c,
                          const std::vector<double>& dlogits, GradientSet& g);

struct AdamState {
  GradientSet m, v;
  int64_t step = 0;
  static AdamState init(const ModelConfig& cfg);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr);

struct PlateauState {
  double lr = 0.0;
  double best = 0.0;
  int bad_epochs = 0;
  bool primed = false;
};

// Reduce lr by `factor` after `patience` consecutive epochs without a
// validation-loss improvement of at least `improvement`.
double plateau_schedule(double valid_loss, const PlateauSpec& spec, PlateauState& state);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  int best_epoch = -1;
  double best_valid_loss = 0.0;
  std::vector<EpochLog> log;
};

int predict(const ModelParams& params, const BeatSample& s);
double accuracy(const ModelParams& params, const std::vector<const BeatSample*>& set,
                int threads = 1);
double mean_loss(const ModelParams& params, const std::vector<const BeatSample*>& set,
                 int threads = 1);

// Full-precision training driver. Keeps the best-validation-loss
// checkpoint; deterministic for a fixed seed at any thread count.
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<const BeatSample*>& train_set,
                  const std::vector<const BeatSample*>& valid_set,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

}  // namespace ecgt
