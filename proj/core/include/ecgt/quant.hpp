#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgt/dataset.hpp"
#include "ecgt/model.hpp"
#include "ecgt/training.hpp"

namespace ecgt {

// Integer arithmetic layer. Everything int_forward executes goes through
// these helpers; the float-ban guard proves no floating-point entry point
// is reached during integer inference.
namespace intops {

// round-half-away-from-zero division, den > 0
int64_t div_round(int64_t num, int64_t den);

int32_t sat8(int64_t v);  // saturate to [-128, 127]

// value * mult * 2^-shift with round-half-away; mult carries the sign
struct Requant {
  int32_t mult = 0;
  int32_t shift = 0;
};
int64_t apply(const Requant& rq, int64_t acc);
int32_t apply_sat8(const Requant& rq, int64_t acc);

// build-time only: encode a real ratio as mult * 2^-shift, |mult| in [2^14, 2^15)
Requant make_requant(double ratio);

// Test instrumentation: while a guard is alive on this thread, any call
// into a float-consuming builder aborts with an exception and the op
// counter records the attempt.
class FloatBanGuard {
 public:
  FloatBanGuard();
  ~FloatBanGuard();
  FloatBanGuard(const FloatBanGuard&) = delete;
  FloatBanGuard& operator=(const FloatBanGuard&) = delete;
};
bool float_banned();
void note_float_op(const char* where);  // throws under an active ban
int64_t float_ops_noted();              // since thread start

}  // namespace intops

// exact floor(sqrt(n)) by integer Newton iteration
uint32_t i_sqrt(uint32_t n);
uint64_t i_sqrt64(uint64_t n);

// ---- integer nonlinearity parameter blocks (built once, integers only) ----

struct LnParams {
  std::vector<int32_t> gamma_q;  // per-channel
  std::vector<int64_t> beta_acc; // folded at the normalized-product scale
  intops::Requant rq_out;        // (s_gamma / kLnNormUnit) -> output scale
};
inline constexpr int64_t kLnNormUnit = 256;  // fixed-point grid of (x-mu)/sigma

// second-order integer exp/softmax in the style of the cited scheme
struct SoftmaxParams {
  int32_t in_shift = 0;    // >0: q << s, <0: q >> -s, applied before the poly
  int64_t q_ln2 = 1;
  int64_t q_b = 0;
  int64_t q_c = 0;
};
inline constexpr int64_t kSoftmaxOne = 1 << 15;  // fixed-point 1.0

struct GeluParams {
  int32_t in_shift = 0;
  int64_t q_b = 0;        // erf clip point, in refined input units
  int64_t q_c = 0;        // poly constant
  int64_t q_one = 0;      // floor(1 / erf_scale)
  int64_t q_clip = 0;     // |refined input| clamp keeping products in range
  intops::Requant rq_out; // gelu accumulator scale -> int8 output scale
};

// Integer LayerNorm: integer mean, integer variance, i_sqrt denominator,
// fixed-point gamma multiply, beta add, requantize to int8.
// Variance 0 degenerates to the requantized beta.
std::vector<int8_t> i_layernorm(const std::vector<int32_t>& x, const LnParams& p);

// Integer softmax over one row of scores. Outputs are non-negative and sum
// exactly to kSoftmaxOne; each entry is within one unit of the real ratio.
std::vector<int32_t> i_softmax(const std::vector<int32_t>& scores, const SoftmaxParams& p);

// Integer GELU on an int32 accumulator value; result is at the params'
// internal scale and is normally fed straight into rq_out.
int64_t i_gelu_acc(int32_t x, const GeluParams& p);
int32_t i_gelu(int32_t x, const GeluParams& p);  // requantized to int8 range

// builders (float allowed; guarded)
LnParams make_ln_params(const std::vector<double>& gamma, const std::vector<double>& beta,
                        double out_scale);
SoftmaxParams make_softmax_params(double score_scale);
GeluParams make_gelu_params(double in_scale, double out_scale);

// ---- whole-model quantization ----

struct ActScales {
  double input = 1.0, rr = 1.0;
  double x0 = 1.0, n1 = 1.0;
  double q = 1.0, k = 1.0, v = 1.0, ctx = 1.0, attn_out = 1.0;
  double x1 = 1.0, n2 = 1.0, g1 = 1.0, g2 = 1.0, x2 = 1.0, n3 = 1.0;
  double head_in = 1.0;

  template <typename F>
  void for_each(F&& f) {
    f("input", input); f("rr", rr);
    f("x0", x0); f("n1", n1);
    f("q", q); f("k", k); f("v", v); f("ctx", ctx); f("attn_out", attn_out);
    f("x1", x1); f("n2", n2); f("g1", g1); f("g2", g2); f("x2", x2); f("n3", n3);
    f("head_in", head_in);
  }
};

// max|x|/127 per boundary; the running estimate grows immediately on a new
// maximum and otherwise relaxes toward it with momentum 0.9, so adding
// calibration batches never shrinks a scale.
class Calibrator {
 public:
  explicit Calibrator(const ModelConfig& cfg) : cfg_(cfg) {}
  void observe(const ModelParams& params, const std::vector<const BeatSample*>& batch);
  ActScales scales() const;
  int64_t batches_seen() const { return batches_; }

 private:
  ModelConfig cfg_;
  ActScales ema_;
  int64_t batches_ = 0;
  void update(double& slot, double batch_max);
  friend struct CalibratorTestHook;
};

ActScales calibrate(const ModelParams& params,
                    const std::vector<const BeatSample*>& calibration_set, int batch_size = 128);

// q = clamp(round(x / scale), -128, 127), round half away from zero
std::vector<int8_t> quantize_tensor(const std::vector<double>& reals, double scale);
int8_t quantize_value(double x, double scale);

// The integer inference artifact: nothing but integers inside.
struct IntModel {
  // conv embedding
  std::vector<int8_t> conv_w;   // k x E row-major
  std::vector<int32_t> conv_b;  // at input*weight scale
  intops::Requant rq_conv;      // -> x0
  std::vector<int8_t> pos;      // at x0 scale, S x E

  LnParams ln1;
  std::vector<int8_t> wq, wk, wv, wo;  // E x E row-major
  std::vector<int32_t> bq, bk, bv, bo;
  intops::Requant rq_q, rq_k, rq_v;  // projection acc -> int8
  SoftmaxParams softmax;
  intops::Requant rq_ctx;       // (probs x V) acc -> int8
  intops::Requant rq_attn_out;  // output projection acc -> int8
  intops::Requant rq_x0_res, rq_attn_res;  // into the x1 grid

  LnParams ln2;
  std::vector<int8_t> ff1_w;  // E x h
  std::vector<int32_t> ff1_b;
  GeluParams gelu1;
  std::vector<int8_t> ff2_w;  // h x E
  std::vector<int32_t> ff2_b;
  GeluParams gelu2;
  intops::Requant rq_x1_res, rq_ffn_res;  // into the x2 grid

  LnParams ln3;
  intops::Requant rq_pool;  // n3 grid -> head_in grid

  std::vector<int8_t> rr_w;  // 2x2
  intops::Requant rq_rr;     // rr acc -> head_in grid

  std::vector<int8_t> head_w;  // head_in x classes
  std::vector<int32_t> head_b;
};

struct QuantizedModel {
  ModelConfig cfg;
  ActScales scales;   // manifest metadata; int_forward never reads these
  IntModel im;
};

QuantizedModel build_quantized(const ModelParams& params, const ActScales& scales);

// integer-only end-to-end inference; int32 logits at the head accumulator scale
std::array<int32_t, 5> int_forward(const std::vector<int8_t>& window_q,
                                   const std::array<int8_t, 2>& rr_q, const ModelConfig& cfg,
                                   const IntModel& m);

std::vector<int8_t> quantize_window(const std::array<float, kWindowLen>& window, double scale,
                                     int input_len = kWindowLen);
std::array<int8_t, 2> quantize_rr(const std::array<float, 2>& rr, double scale);

int int_predict(const QuantizedModel& qm, const BeatSample& s);
double int_accuracy(const QuantizedModel& qm, const std::vector<const BeatSample*>& set,
                    int threads = 1);

// Weights snapped onto their int8 grids (per-tensor max/127), biases onto
// the accumulator grids the integer pipeline uses.
ModelParams fake_quant_weights(const ModelParams& p, const ActScales& s);

// Fake-quantization forward: quantize-dequantize at every boundary the
// integer pipeline has, float nonlinearities in between. Used by QAT and
// as the agreement reference for the exported integer model. Expects
// weights already passed through fake_quant_weights.
std::vector<double> fake_quant_forward(const ModelParams& params, const ActScales& scales,
                                       const std::vector<double>& window,
                                       const std::array<double, 2>& rr,
                                       ForwardCache* cache = nullptr);
int fake_quant_predict(const ModelParams& params, const ActScales& scales, const BeatSample& s);

struct QatConfig {
  int epochs = 15;
  int batch_size = 128;
  double lr = 2e-4;  // lr0 / 10
  uint64_t seed = 0;
  int threads = 1;
};

struct QatResult {
  ModelParams params;  // fine-tuned float weights
  ActScales scales;
  QuantizedModel exported;
  std::vector<EpochLog> log;
};

// Straight-through-estimator fine-tuning against the fake-quant forward,
// then a frozen integer export.
QatResult qat_finetune(const ModelParams& start, const ActScales& scales,
                       const std::vector<const BeatSample*>& train_set,
                       const std::vector<const BeatSample*>& valid_set, const QatConfig& cfg);

}  // namespace ecgt
