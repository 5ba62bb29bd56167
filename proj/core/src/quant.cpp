#include "ecgt/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ecgt {

namespace intops {

namespace {
thread_local int ban_depth = 0;
thread_local int64_t noted_ops = 0;
}  // namespace

FloatBanGuard::FloatBanGuard() { ++ban_depth; }
FloatBanGuard::~FloatBanGuard() { --ban_depth; }
bool float_banned() { return ban_depth > 0; }
int64_t float_ops_noted() { return noted_ops; }

void note_float_op(const char* where) {
  ++noted_ops;
  if (ban_depth > 0)
    throw std::logic_error(std::string("floating-point operation inside integer inference: ") +
                           where);
}

int64_t div_round(int64_t num, int64_t den) {
  // round half away from zero; den > 0
  const int64_t q = num / den;
  const int64_t r = num % den;
  if (r >= 0) return (2 * r >= den) ? q + 1 : q;
  return (-2 * r >= den) ? q - 1 : q;
}

int32_t sat8(int64_t v) {
  if (v > 127) return 127;
  if (v < -128) return -128;
  return int32_t(v);
}

int64_t apply(const Requant& rq, int64_t acc) {
  return div_round(acc * int64_t(rq.mult), int64_t(1) << rq.shift);
}

int32_t apply_sat8(const Requant& rq, int64_t acc) { return sat8(apply(rq, acc)); }

Requant make_requant(double ratio) {
  note_float_op("make_requant");
  Requant rq;
  if (ratio == 0.0 || !std::isfinite(ratio)) {
    rq.mult = 0;
    rq.shift = 0;
    return rq;
  }
  const double sign = ratio < 0 ? -1.0 : 1.0;
  double mag = std::abs(ratio);
  int shift = 0;
  while (mag < double(1 << 14) && shift < 62) {
    mag *= 2.0;
    ++shift;
  }
  while (mag >= double(1 << 15) && shift > 0) {
    mag /= 2.0;
    --shift;
  }
  if (mag >= double(1 << 15))
    throw std::invalid_argument("make_requant: ratio too large to encode");
  rq.mult = int32_t(sign * std::round(mag));
  rq.shift = shift;
  return rq;
}

}  // namespace intops

uint32_t i_sqrt(uint32_t n) {
  if (n == 0) return 0;
  const int bits = std::bit_width(n);
  uint64_t x = uint64_t(1) << ((bits + 1) / 2);
  while (true) {
    const uint64_t y = (x + n / x) >> 1;
    if (y >= x) return uint32_t(x);
    x = y;
  }
}

uint64_t i_sqrt64(uint64_t n) {
  if (n == 0) return 0;
  const int bits = std::bit_width(n);
  uint64_t x = uint64_t(1) << ((bits + 1) / 2);
  while (true) {
    const uint64_t y = (x + n / x) >> 1;
    if (y >= x) return x;
    x = y;
  }
}

// ---- integer LayerNorm ----

LnParams make_ln_params(const std::vector<double>& gamma, const std::vector<double>& beta,
                        double out_scale) {
  intops::note_float_op("make_ln_params");
  if (gamma.size() != beta.size()) throw std::invalid_argument("make_ln_params: size mismatch");
  double gmax = 1e-8;
  for (double g : gamma) gmax = std::max(gmax, std::abs(g));
  const double s_g = gmax / 32767.0;
  LnParams p;
  p.gamma_q.resize(gamma.size());
  p.beta_acc.resize(beta.size());
  for (size_t i = 0; i < gamma.size(); ++i) {
    p.gamma_q[i] = int32_t(std::llround(gamma[i] / s_g));
    p.beta_acc[i] = std::llround(beta[i] * double(kLnNormUnit) / s_g);
  }
  p.rq_out = intops::make_requant((s_g / double(kLnNormUnit)) / out_scale);
  return p;
}

std::vector<int8_t> i_layernorm(const std::vector<int32_t>& x, const LnParams& p) {
  const int64_t E = int64_t(x.size());
  if (E == 0 || size_t(E) != p.gamma_q.size())
    throw std::invalid_argument("i_layernorm: size mismatch");
  int64_t sum = 0;
  for (int32_t v : x) sum += v;
  // dE[i] = E*x[i] - sum, an exact integer representation of E*(x - mu)
  std::vector<int64_t> dE(size_t(E), 0);
  int64_t m2 = 0;
  for (size_t i = 0; i < size_t(E); ++i) {
    dE[i] = E * int64_t(x[i]) - sum;
    m2 += dE[i] * dE[i];
  }
  // v = m2 / E = (E * sigma)^2; zero iff the input is constant
  const int64_t v = intops::div_round(m2, E);
  std::vector<int8_t> out(size_t(E), 0);
  if (v == 0) {
    for (size_t i = 0; i < size_t(E); ++i)
      out[i] = int8_t(intops::apply_sat8(p.rq_out, p.beta_acc[i]));
    return out;
  }
  // upshift before the integer sqrt for precision
  const int u = std::clamp((62 - int(std::bit_width(uint64_t(v)))) / 2, 0, 15);
  const int64_t sigma = int64_t(i_sqrt64(uint64_t(v) << (2 * u)));  // = E*sigma*2^u
  for (size_t i = 0; i < size_t(E); ++i) {
    const int64_t n = intops::div_round((dE[i] * kLnNormUnit) << u, sigma);
    const int64_t acc = n * int64_t(p.gamma_q[i]) + p.beta_acc[i];
    out[i] = int8_t(intops::apply_sat8(p.rq_out, acc));
  }
  return out;
}

// ---- integer softmax ----

namespace {
constexpr double kExpA = 0.3585, kExpB = 1.353, kExpC = 0.344;
constexpr double kLn2 = 0.6931471805599453;
constexpr double kErfA = -0.2575, kErfB = -1.8305;  // minimax fit of erf for x*Phi(x)
constexpr double kInvSqrt2 = 0.7071067811865476;

int grid_shift(double native_unit, double scale, int target_bits) {
  // shift so that `native_unit` spans about 2^target_bits integer steps
  const int cur = int(std::floor(std::log2(native_unit / scale)));
  return std::clamp(target_bits - cur, -31, 40);
}

int64_t shifted(int64_t q, int32_t sh) {
  return sh >= 0 ? (q << sh) : (q >> (-sh));
}
}  // namespace

SoftmaxParams make_softmax_params(double score_scale) {
  intops::note_float_op("make_softmax_params");
  if (score_scale <= 0) throw std::invalid_argument("make_softmax_params: bad scale");
  SoftmaxParams p;
  p.in_shift = grid_shift(kLn2, score_scale, 12);
  const double s = score_scale / std::pow(2.0, double(p.in_shift));
  p.q_ln2 = int64_t(std::floor(kLn2 / s));
  p.q_b = int64_t(std::floor(kExpB / s));
  p.q_c = int64_t(std::floor(kExpC / (kExpA * s * s)));
  if (p.q_ln2 < 1) throw std::logic_error("make_softmax_params: degenerate grid");
  return p;
}

std::vector<int32_t> i_softmax(const std::vector<int32_t>& scores, const SoftmaxParams& p) {
  if (scores.empty()) return {};
  const size_t S = scores.size();
  std::vector<int64_t> q(S);
  for (size_t i = 0; i < S; ++i) q[i] = shifted(scores[i], p.in_shift);
  const int64_t mx = *std::max_element(q.begin(), q.end());
  std::vector<int64_t> e(S);
  for (size_t i = 0; i < S; ++i) {
    const int64_t d = q[i] - mx;  // <= 0
    const int64_t z = (-d) / p.q_ln2;
    const int64_t r = d + z * p.q_ln2;  // in (-q_ln2, 0]
    const int64_t base = r + p.q_b;
    const int64_t poly = base * base + p.q_c;
    e[i] = (z >= 62) ? 0 : (poly >> z);
  }
  int64_t total = 0;
  for (int64_t v : e) total += v;
  // the max element always contributes poly(0) > 0
  std::vector<int32_t> out(S);
  int64_t prev = 0, cum = 0;
  for (size_t i = 0; i < S; ++i) {
    cum += e[i];
    const int64_t c = (cum * kSoftmaxOne) / total;
    out[i] = int32_t(c - prev);
    prev = c;
  }
  return out;
}

// ---- integer GELU ----

GeluParams make_gelu_params(double in_scale, double out_scale) {
  intops::note_float_op("make_gelu_params");
  if (in_scale <= 0 || out_scale <= 0) throw std::invalid_argument("make_gelu_params: bad scale");
  GeluParams p;
  p.in_shift = grid_shift(-kErfB / kInvSqrt2, in_scale, 12);
  const double s = in_scale / std::pow(2.0, double(p.in_shift));
  const double s_erf = s * kInvSqrt2;
  p.q_b = int64_t(std::floor(kErfB / s_erf));                    // negative
  p.q_c = int64_t(std::floor(1.0 / (kErfA * s_erf * s_erf)));    // negative
  p.q_one = p.q_c;
  const int64_t worst = 2 * std::llabs(p.q_c) + p.q_b * p.q_b;
  p.q_clip = (int64_t(1) << 61) / std::max<int64_t>(worst, 1);
  const double s_gelu = s * (kErfA * s_erf * s_erf) / 2.0;  // negative
  p.rq_out = intops::make_requant(s_gelu / out_scale);
  return p;
}

int64_t i_gelu_acc(int32_t x, const GeluParams& p) {
  int64_t q = shifted(x, p.in_shift);
  q = std::clamp(q, -p.q_clip, p.q_clip);
  if (q == 0) return 0;
  const int64_t sign = q > 0 ? 1 : -1;
  const int64_t t = std::min(sign * q, -p.q_b);  // |input|, clipped at the poly edge
  const int64_t base = t + p.q_b;                // <= 0
  const int64_t erf = sign * (base * base + p.q_c);
  return q * (erf + p.q_one);
}

int32_t i_gelu(int32_t x, const GeluParams& p) {
  return intops::apply_sat8(p.rq_out, i_gelu_acc(x, p));
}

// ---- calibration ----

namespace {

double maxabs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double maxabs(const Matrix& m) { return maxabs(m.vec()); }

}  // namespace

void Calibrator::update(double& slot, double batch_max) {
  if (batches_ == 0) {
    slot = batch_max;
  } else {
    // grow immediately, relax toward new maxima with momentum 0.9;
    // never decay, so a scale can only widen as batches accumulate
    slot = std::max(slot, 0.9 * slot + 0.1 * batch_max);
  }
}

void Calibrator::observe(const ModelParams& params, const std::vector<const BeatSample*>& batch) {
  ActScales bm;
  bm.for_each([](const char*, double& v) { v = 0.0; });
  for (const BeatSample* s : batch) {
    ForwardCache c;
    std::vector<double> window(s->window.begin(), s->window.begin() + params.cfg.input_len);
    forward(window, {double(s->rr_norm[0]), double(s->rr_norm[1])}, params, &c);
    bm.input = std::max(bm.input, maxabs(window));
    bm.rr = std::max({bm.rr, std::abs(double(s->rr_norm[0])), std::abs(double(s->rr_norm[1]))});
    bm.x0 = std::max(bm.x0, maxabs(c.x0));
    bm.n1 = std::max(bm.n1, maxabs(c.n1));
    bm.q = std::max(bm.q, maxabs(c.q));
    bm.k = std::max(bm.k, maxabs(c.k));
    bm.v = std::max(bm.v, maxabs(c.v));
    bm.ctx = std::max(bm.ctx, maxabs(c.ctx));
    bm.attn_out = std::max(bm.attn_out, maxabs(c.attn_out));
    bm.x1 = std::max(bm.x1, maxabs(c.x1));
    bm.n2 = std::max(bm.n2, maxabs(c.n2));
    bm.g1 = std::max(bm.g1, maxabs(c.g1));
    bm.g2 = std::max(bm.g2, maxabs(c.g2));
    bm.x2 = std::max(bm.x2, maxabs(c.x2));
    bm.n3 = std::max(bm.n3, maxabs(c.n3));
    bm.head_in = std::max(bm.head_in, maxabs(c.head_in));
  }
  ema_.for_each([&](const char* name, double& slot) {
    double v = 0.0;
    bm.for_each([&](const char* n2, double& bv) {
      if (std::string(name) == n2) v = bv;
    });
    update(slot, v);
  });
  ++batches_;
}

ActScales Calibrator::scales() const {
  ActScales s = ema_;
  s.for_each([](const char*, double& v) { v = std::max(v, 1e-8) / 127.0; });
  return s;
}

ActScales calibrate(const ModelParams& params,
                    const std::vector<const BeatSample*>& calibration_set, int batch_size) {
  Calibrator cal(params.cfg);
  for (size_t lo = 0; lo < calibration_set.size(); lo += size_t(batch_size)) {
    const size_t hi = std::min(calibration_set.size(), lo + size_t(batch_size));
    std::vector<const BeatSample*> batch(calibration_set.begin() + long(lo),
                                         calibration_set.begin() + long(hi));
    cal.observe(params, batch);
  }
  return cal.scales();
}

int8_t quantize_value(double x, double scale) {
  return int8_t(intops::sat8(std::llround(x / scale)));
}

std::vector<int8_t> quantize_tensor(const std::vector<double>& reals, double scale) {
  intops::note_float_op("quantize_tensor");
  if (scale <= 0) throw std::invalid_argument("quantize_tensor: scale must be positive");
  std::vector<int8_t> out(reals.size());
  for (size_t i = 0; i < reals.size(); ++i) out[i] = quantize_value(reals[i], scale);
  return out;
}

// ---- model build ----

namespace {

double weight_scale(const std::vector<double>& w) {
  double m = 1e-8;
  for (double x : w) m = std::max(m, std::abs(x));
  return m / 127.0;
}

std::vector<int32_t> quantize_bias(const std::vector<double>& b, double acc_scale) {
  std::vector<int32_t> out(b.size());
  for (size_t i = 0; i < b.size(); ++i) {
    const double q = std::round(b[i] / acc_scale);
    out[i] = int32_t(std::clamp(q, -2147483648.0, 2147483647.0));
  }
  return out;
}

}  // namespace

QuantizedModel build_quantized(const ModelParams& params, const ActScales& s) {
  intops::note_float_op("build_quantized");
  const ModelConfig& cfg = params.cfg;
  cfg.validate();
  QuantizedModel qm;
  qm.cfg = cfg;
  qm.scales = s;
  IntModel& m = qm.im;

  const double s_convw = weight_scale(params.conv_w.vec());
  m.conv_w = quantize_tensor(params.conv_w.vec(), s_convw);
  m.conv_b = quantize_bias(params.conv_b, s.input * s_convw);
  m.rq_conv = intops::make_requant(s.input * s_convw / s.x0);
  m.pos = quantize_tensor(params.pos.vec(), s.x0);

  m.ln1 = make_ln_params(params.ln1_g, params.ln1_b, s.n1);

  const double s_wq = weight_scale(params.wq.vec());
  const double s_wk = weight_scale(params.wk.vec());
  const double s_wv = weight_scale(params.wv.vec());
  const double s_wo = weight_scale(params.wo.vec());
  m.wq = quantize_tensor(params.wq.vec(), s_wq);
  m.wk = quantize_tensor(params.wk.vec(), s_wk);
  m.wv = quantize_tensor(params.wv.vec(), s_wv);
  m.wo = quantize_tensor(params.wo.vec(), s_wo);
  m.bq = quantize_bias(params.bq, s.n1 * s_wq);
  m.bk = quantize_bias(params.bk, s.n1 * s_wk);
  m.bv = quantize_bias(params.bv, s.n1 * s_wv);
  m.bo = quantize_bias(params.bo, s.ctx * s_wo);
  m.rq_q = intops::make_requant(s.n1 * s_wq / s.q);
  m.rq_k = intops::make_requant(s.n1 * s_wk / s.k);
  m.rq_v = intops::make_requant(s.n1 * s_wv / s.v);
  m.softmax = make_softmax_params(s.q * s.k / std::sqrt(double(cfg.head_dim())));
  m.rq_ctx = intops::make_requant(s.v / (double(kSoftmaxOne) * s.ctx));
  m.rq_attn_out = intops::make_requant(s.ctx * s_wo / s.attn_out);
  m.rq_x0_res = intops::make_requant(s.x0 / s.x1);
  m.rq_attn_res = intops::make_requant(s.attn_out / s.x1);

  m.ln2 = make_ln_params(params.ln2_g, params.ln2_b, s.n2);
  const double s_w1 = weight_scale(params.ff1_w.vec());
  const double s_w2 = weight_scale(params.ff2_w.vec());
  m.ff1_w = quantize_tensor(params.ff1_w.vec(), s_w1);
  m.ff2_w = quantize_tensor(params.ff2_w.vec(), s_w2);
  m.ff1_b = quantize_bias(params.ff1_b, s.n2 * s_w1);
  m.ff2_b = quantize_bias(params.ff2_b, s.g1 * s_w2);
  m.gelu1 = make_gelu_params(s.n2 * s_w1, s.g1);
  m.gelu2 = make_gelu_params(s.g1 * s_w2, s.g2);
  m.rq_x1_res = intops::make_requant(s.x1 / s.x2);
  m.rq_ffn_res = intops::make_requant(s.g2 / s.x2);

  m.ln3 = make_ln_params(params.ln3_g, params.ln3_b, s.n3);
  m.rq_pool = intops::make_requant(s.n3 / s.head_in);

  if (cfg.use_rr) {
    const double s_rrw = weight_scale(params.rr_w.vec());
    m.rr_w = quantize_tensor(params.rr_w.vec(), s_rrw);
    m.rq_rr = intops::make_requant(s.rr * s_rrw / s.head_in);
  }

  const double s_hw = weight_scale(params.head_w.vec());
  m.head_w = quantize_tensor(params.head_w.vec(), s_hw);
  m.head_b = quantize_bias(params.head_b, s.head_in * s_hw);
  return qm;
}

// ---- integer forward ----

namespace {

// int8 matmul helper: (rows x in) * (in x out), weights row-major
void int_dense(const std::vector<int8_t>& x, int rows, int in, const std::vector<int8_t>& w,
               int out, const std::vector<int32_t>& b, std::vector<int32_t>& acc) {
  acc.assign(size_t(rows) * size_t(out), 0);
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < in; ++i) {
      const int32_t xv = x[size_t(r) * in + i];
      if (xv == 0) continue;
      const int8_t* wrow = &w[size_t(i) * out];
      int32_t* arow = &acc[size_t(r) * out];
      for (int o = 0; o < out; ++o) arow[size_t(o)] += xv * int32_t(wrow[size_t(o)]);
    }
    int32_t* arow = &acc[size_t(r) * out];
    for (int o = 0; o < out; ++o) arow[size_t(o)] += b[size_t(o)];
  }
}

void requant_rows(const std::vector<int32_t>& acc, const intops::Requant& rq,
                  std::vector<int8_t>& out) {
  out.resize(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) out[i] = int8_t(intops::apply_sat8(rq, acc[i]));
}

}  // namespace

std::array<int32_t, 5> int_forward(const std::vector<int8_t>& window_q,
                                   const std::array<int8_t, 2>& rr_q, const ModelConfig& cfg,
                                   const IntModel& m) {
  const int S = cfg.seq_len(), E = cfg.embed_dim, H = cfg.heads, P = cfg.head_dim();
  const int h = cfg.hidden, k = cfg.kernel;
  if (int(window_q.size()) != cfg.input_len)
    throw std::invalid_argument("int_forward: window length mismatch");

  // conv embedding + positional embedding, saturated onto the x0 grid
  std::vector<int8_t> x0(size_t(S) * size_t(E));
  for (int t = 0; t < S; ++t)
    for (int e = 0; e < E; ++e) {
      int32_t acc = m.conv_b[size_t(e)];
      for (int j = 0; j < k; ++j)
        acc += int32_t(window_q[size_t(t * k + j)]) * int32_t(m.conv_w[size_t(j) * E + e]);
      const int64_t conv = intops::apply(m.rq_conv, acc);
      x0[size_t(t) * E + e] =
          int8_t(intops::sat8(conv + int64_t(m.pos[size_t(t) * E + e])));
    }

  // encoder block
  auto run_ln = [&](const std::vector<int8_t>& in, const LnParams& p) {
    std::vector<int8_t> out(in.size());
    std::vector<int32_t> row(size_t(E), 0);
    for (int t = 0; t < S; ++t) {
      for (int e = 0; e < E; ++e) row[size_t(e)] = in[size_t(t) * E + e];
      auto r = i_layernorm(row, p);
      for (int e = 0; e < E; ++e) out[size_t(t) * E + e] = r[size_t(e)];
    }
    return out;
  };

  std::vector<int8_t> n1 = run_ln(x0, m.ln1);

  std::vector<int32_t> acc;
  std::vector<int8_t> q8, k8, v8;
  int_dense(n1, S, E, m.wq, E, m.bq, acc);
  requant_rows(acc, m.rq_q, q8);
  int_dense(n1, S, E, m.wk, E, m.bk, acc);
  requant_rows(acc, m.rq_k, k8);
  int_dense(n1, S, E, m.wv, E, m.bv, acc);
  requant_rows(acc, m.rq_v, v8);

  std::vector<int8_t> ctx(size_t(S) * size_t(E));
  std::vector<int32_t> score_row(size_t(S), 0);
  for (int hd = 0; hd < H; ++hd) {
    const int off = hd * P;
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        int32_t sacc = 0;
        for (int d = 0; d < P; ++d)
          sacc += int32_t(q8[size_t(i) * E + off + d]) * int32_t(k8[size_t(j) * E + off + d]);
        score_row[size_t(j)] = sacc;
      }
      const auto probs = i_softmax(score_row, m.softmax);
      for (int d = 0; d < P; ++d) {
        int64_t cacc = 0;
        for (int j = 0; j < S; ++j)
          cacc += int64_t(probs[size_t(j)]) * int64_t(v8[size_t(j) * E + off + d]);
        ctx[size_t(i) * E + off + d] = int8_t(intops::apply_sat8(m.rq_ctx, cacc));
      }
    }
  }

  std::vector<int8_t> attn_out;
  int_dense(ctx, S, E, m.wo, E, m.bo, acc);
  requant_rows(acc, m.rq_attn_out, attn_out);

  std::vector<int8_t> x1(size_t(S) * size_t(E));
  for (size_t i = 0; i < x1.size(); ++i)
    x1[i] = int8_t(intops::sat8(intops::apply(m.rq_x0_res, x0[i]) +
                                intops::apply(m.rq_attn_res, attn_out[i])));

  std::vector<int8_t> n2 = run_ln(x1, m.ln2);
  int_dense(n2, S, E, m.ff1_w, h, m.ff1_b, acc);
  std::vector<int8_t> g1(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) g1[i] = int8_t(i_gelu(acc[i], m.gelu1));
  int_dense(g1, S, h, m.ff2_w, E, m.ff2_b, acc);
  std::vector<int8_t> g2(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) g2[i] = int8_t(i_gelu(acc[i], m.gelu2));

  std::vector<int8_t> x2(size_t(S) * size_t(E));
  for (size_t i = 0; i < x2.size(); ++i)
    x2[i] = int8_t(intops::sat8(intops::apply(m.rq_x1_res, x1[i]) +
                                intops::apply(m.rq_ffn_res, g2[i])));

  std::vector<int8_t> n3 = run_ln(x2, m.ln3);

  // mean pool on the n3 grid, then onto the shared head grid
  std::vector<int8_t> head_in(size_t(cfg.head_in()));
  for (int e = 0; e < E; ++e) {
    int64_t sum = 0;
    for (int t = 0; t < S; ++t) sum += n3[size_t(t) * E + e];
    const int64_t mean = intops::div_round(sum, S);
    head_in[size_t(e)] = int8_t(intops::apply_sat8(m.rq_pool, mean));
  }
  if (cfg.use_rr) {
    for (int i = 0; i < 2; ++i) {
      int64_t racc = 0;
      for (int j = 0; j < 2; ++j)
        racc += int64_t(m.rr_w[size_t(i) * 2 + j]) * int64_t(rr_q[size_t(j)]);
      head_in[size_t(E + i)] = int8_t(intops::apply_sat8(m.rq_rr, racc));
    }
  }

  std::array<int32_t, 5> logits{};
  for (int o = 0; o < cfg.classes; ++o) {
    int32_t lacc = m.head_b[size_t(o)];
    for (int i = 0; i < cfg.head_in(); ++i)
      lacc += int32_t(head_in[size_t(i)]) * int32_t(m.head_w[size_t(i) * cfg.classes + o]);
    logits[size_t(o)] = lacc;
  }
  return logits;
}

std::vector<int8_t> quantize_window(const std::array<float, kWindowLen>& window, double scale,
                                     int input_len) {
  std::vector<int8_t> out(size_t(input_len), 0);
  for (int i = 0; i < input_len; ++i) out[size_t(i)] = quantize_value(window[size_t(i)], scale);
  return out;
}

std::array<int8_t, 2> quantize_rr(const std::array<float, 2>& rr, double scale) {
  return {quantize_value(rr[0], scale), quantize_value(rr[1], scale)};
}

int int_predict(const QuantizedModel& qm, const BeatSample& s) {
  const auto wq = quantize_window(s.window, qm.scales.input, qm.cfg.input_len);
  const auto rq = quantize_rr(s.rr_norm, qm.scales.rr);
  std::array<int32_t, 5> logits;
  {
    intops::FloatBanGuard guard;
    logits = int_forward(wq, rq, qm.cfg, qm.im);
  }
  int best = 0;
  for (int i = 1; i < qm.cfg.classes; ++i)
    if (logits[size_t(i)] > logits[size_t(best)]) best = i;
  return best;
}

double int_accuracy(const QuantizedModel& qm, const std::vector<const BeatSample*>& set,
                    int threads) {
  if (set.empty()) return 0.0;
  std::vector<int> hit(set.size(), 0);
  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      hit[i] = int_predict(qm, *set[i]) == int(set[i]->label) ? 1 : 0;
  };
  const int t = std::max(1, threads);
  if (t == 1) {
    work(0, set.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (set.size() + size_t(t) - 1) / size_t(t);
    for (size_t lo = 0; lo < set.size(); lo += chunk)
      pool.emplace_back(work, lo, std::min(set.size(), lo + chunk));
    for (auto& th : pool) th.join();
  }
  int64_t correct = 0;
  for (int v : hit) correct += v;
  return double(correct) / double(set.size());
}

// ---- fake-quant path ----

namespace {

double fq(double x, double scale) {
  return std::clamp(std::round(x / scale), -128.0, 127.0) * scale;
}

void fq_matrix(Matrix& m, double scale) {
  for (double& v : m.vec()) v = fq(v, scale);
}

void fq_vec(std::vector<double>& v, double scale) {
  for (double& x : v) x = fq(x, scale);
}

void fq_weight(Matrix& m) {
  double mx = 1e-8;
  for (double v : m.vec()) mx = std::max(mx, std::abs(v));
  const double s = mx / 127.0;
  for (double& v : m.vec()) v = std::round(v / s) * s;
}

void fq_bias(std::vector<double>& b, double acc_scale) {
  for (double& v : b) v = std::round(v / acc_scale) * acc_scale;
}

}  // namespace

ModelParams fake_quant_weights(const ModelParams& p, const ActScales& s) {
  ModelParams out = p;
  auto wscale = [](const Matrix& m) {
    double mx = 1e-8;
    for (double v : m.vec()) mx = std::max(mx, std::abs(v));
    return mx / 127.0;
  };
  const double s_convw = wscale(out.conv_w);
  fq_weight(out.conv_w);
  fq_bias(out.conv_b, s.input * s_convw);
  fq_matrix(out.pos, s.x0);
  const double s_wq = wscale(out.wq), s_wk = wscale(out.wk), s_wv = wscale(out.wv),
               s_wo = wscale(out.wo);
  fq_weight(out.wq);
  fq_weight(out.wk);
  fq_weight(out.wv);
  fq_weight(out.wo);
  fq_bias(out.bq, s.n1 * s_wq);
  fq_bias(out.bk, s.n1 * s_wk);
  fq_bias(out.bv, s.n1 * s_wv);
  fq_bias(out.bo, s.ctx * s_wo);
  const double s_w1 = wscale(out.ff1_w), s_w2 = wscale(out.ff2_w);
  fq_weight(out.ff1_w);
  fq_weight(out.ff2_w);
  fq_bias(out.ff1_b, s.n2 * s_w1);
  fq_bias(out.ff2_b, s.g1 * s_w2);
  if (p.cfg.use_rr) fq_weight(out.rr_w);
  const double s_hw = wscale(out.head_w);
  fq_weight(out.head_w);
  fq_bias(out.head_b, s.head_in * s_hw);
  // layer-norm parameters stay float; the integer pipeline carries them at
  // 16-bit precision, far inside the int8 activation grid
  return out;
}

std::vector<double> fake_quant_forward(const ModelParams& p, const ActScales& sc,
                                       const std::vector<double>& window,
                                       const std::array<double, 2>& rr, ForwardCache* cache) {
  const ModelConfig& cfg = p.cfg;
  const int S = cfg.seq_len(), E = cfg.embed_dim, h = cfg.hidden;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.window = window;
  fq_vec(c.window, sc.input);
  c.rr = {fq(rr[0], sc.rr), fq(rr[1], sc.rr)};

  c.x0 = conv_embed(c.window, p);
  fq_matrix(c.x0, sc.x0);
  c.n1 = layer_norm(c.x0, p.ln1_g, p.ln1_b);
  fq_matrix(c.n1, sc.n1);

  // attention with quantized q/k/v/probs/ctx boundaries
  {
    auto project = [&](const Matrix& w, const std::vector<double>& b) {
      Matrix out = matmul(c.n1, w);
      for (int t = 0; t < out.rows(); ++t)
        for (int j = 0; j < out.cols(); ++j) out(t, j) += b[size_t(j)];
      return out;
    };
    c.q = project(p.wq, p.bq);
    fq_matrix(c.q, sc.q);
    c.k = project(p.wk, p.bk);
    fq_matrix(c.k, sc.k);
    c.v = project(p.wv, p.bv);
    fq_matrix(c.v, sc.v);
    const int H = cfg.heads, P = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(double(P));
    c.probs.clear();
    c.ctx = Matrix(S, E);
    for (int hd = 0; hd < H; ++hd) {
      const int off = hd * P;
      Matrix scores(S, S);
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
          double sacc = 0.0;
          for (int d = 0; d < P; ++d) sacc += c.q(i, off + d) * c.k(j, off + d);
          scores(i, j) = sacc * scale;
        }
      softmax_rows(scores);
      // probs live on the fixed-point softmax grid
      for (double& v : scores.vec())
        v = std::round(v * double(kSoftmaxOne)) / double(kSoftmaxOne);
      for (int i = 0; i < S; ++i)
        for (int d = 0; d < P; ++d) {
          double sacc = 0.0;
          for (int j = 0; j < S; ++j) sacc += scores(i, j) * c.v(j, off + d);
          c.ctx(i, off + d) = sacc;
        }
      c.probs.push_back(std::move(scores));
    }
    fq_matrix(c.ctx, sc.ctx);
    c.attn_out = matmul(c.ctx, p.wo);
    for (int t = 0; t < S; ++t)
      for (int j = 0; j < E; ++j) c.attn_out(t, j) += p.bo[size_t(j)];
    fq_matrix(c.attn_out, sc.attn_out);
  }

  c.x1 = Matrix(S, E);
  for (size_t i = 0; i < c.x1.size(); ++i)
    c.x1.vec()[i] = fq(fq(c.x0.vec()[i], sc.x1) + fq(c.attn_out.vec()[i], sc.x1), sc.x1);

  c.n2 = layer_norm(c.x1, p.ln2_g, p.ln2_b);
  fq_matrix(c.n2, sc.n2);
  c.h1 = matmul(c.n2, p.ff1_w);
  for (int t = 0; t < S; ++t)
    for (int j = 0; j < h; ++j) c.h1(t, j) += p.ff1_b[size_t(j)];
  c.g1 = Matrix(S, h);
  for (size_t i = 0; i < c.h1.size(); ++i) c.g1.vec()[i] = fq(gelu(c.h1.vec()[i]), sc.g1);
  c.h2 = matmul(c.g1, p.ff2_w);
  for (int t = 0; t < S; ++t)
    for (int j = 0; j < E; ++j) c.h2(t, j) += p.ff2_b[size_t(j)];
  c.g2 = Matrix(S, E);
  for (size_t i = 0; i < c.h2.size(); ++i) c.g2.vec()[i] = fq(gelu(c.h2.vec()[i]), sc.g2);

  c.x2 = Matrix(S, E);
  for (size_t i = 0; i < c.x2.size(); ++i)
    c.x2.vec()[i] = fq(fq(c.x1.vec()[i], sc.x2) + fq(c.g2.vec()[i], sc.x2), sc.x2);

  c.n3 = layer_norm(c.x2, p.ln3_g, p.ln3_b);
  fq_matrix(c.n3, sc.n3);

  c.pooled.assign(size_t(E), 0.0);
  for (int t = 0; t < S; ++t)
    for (int e = 0; e < E; ++e) c.pooled[size_t(e)] += c.n3(t, e);
  for (double& v : c.pooled) v = fq(fq(v / S, sc.n3), sc.head_in);

  c.head_in = c.pooled;
  if (cfg.use_rr) {
    c.rr_emb.assign(2, 0.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c.rr_emb[size_t(i)] += p.rr_w(i, j) * c.rr[size_t(j)];
    for (double& v : c.rr_emb) v = fq(v, sc.head_in);
    c.head_in.insert(c.head_in.end(), c.rr_emb.begin(), c.rr_emb.end());
  }

  c.logits.assign(size_t(cfg.classes), 0.0);
  for (int o = 0; o < cfg.classes; ++o) {
    double acc = p.head_b[size_t(o)];
    for (int i = 0; i < cfg.head_in(); ++i) acc += p.head_w(i, o) * c.head_in[size_t(i)];
    c.logits[size_t(o)] = acc;
  }
  return c.logits;
}

int fake_quant_predict(const ModelParams& params, const ActScales& scales, const BeatSample& s) {
  std::vector<double> window(s.window.begin(), s.window.begin() + params.cfg.input_len);
  auto logits = fake_quant_forward(params, scales, window,
                                   {double(s.rr_norm[0]), double(s.rr_norm[1])});
  int best = 0;
  for (int i = 1; i < int(logits.size()); ++i)
    if (logits[size_t(i)] > logits[size_t(best)]) best = i;
  return best;
}

QatResult qat_finetune(const ModelParams& start, const ActScales& scales,
                       const std::vector<const BeatSample*>& train_set,
                       const std::vector<const BeatSample*>& valid_set, const QatConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("qat_finetune: empty training set");
  ModelParams params = start;
  AdamState adam = AdamState::init(params.cfg);

  QatResult result;
  result.scales = scales;
  double best_valid = std::numeric_limits<double>::infinity();
  ModelParams best_params = params;

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));

  auto set_loss = [&](const ModelParams& fqp, const std::vector<const BeatSample*>& set) {
    double total = 0.0;
    for (const BeatSample* s : set) {
      std::vector<double> window(s->window.begin(), s->window.begin() + params.cfg.input_len);
      auto logits = fake_quant_forward(fqp, scales, window,
                                       {double(s->rr_norm[0]), double(s->rr_norm[1])});
      double loss = 0.0;
      ce_logit_grad(logits, int(s->label), &loss);
      total += loss;
    }
    return total / double(std::max<size_t>(1, set.size()));
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x714174 + uint64_t(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (size_t lo = 0; lo < order.size(); lo += size_t(cfg.batch_size)) {
      const size_t hi = std::min(order.size(), lo + size_t(cfg.batch_size));
      const ModelParams fqp = fake_quant_weights(params, scales);
      const size_t n = hi - lo;
      std::vector<GradientSet> per(n, GradientSet::zeros(params.cfg));
      std::vector<double> losses(n, 0.0);
      auto work = [&](size_t wlo, size_t whi) {
        for (size_t i = wlo; i < whi; ++i) {
          const BeatSample* s = train_set[order[lo + i]];
          ForwardCache cache;
          std::vector<double> window(s->window.begin(), s->window.begin() + params.cfg.input_len);
          fake_quant_forward(fqp, scales, window,
                             {double(s->rr_norm[0]), double(s->rr_norm[1])}, &cache);
          double loss = 0.0;
          auto dlogits = ce_logit_grad(cache.logits, int(s->label), &loss);
          losses[i] = loss;
          // straight-through: gradients of the quantize-dequantize nodes
          // pass through; local jacobians evaluate at the fake-quant values
          backward_from_logits(fqp, cache, dlogits, per[i]);
        }
      };
      const int t = std::max(1, cfg.threads);
      if (t == 1 || n < 2) {
        work(0, n);
      } else {
        std::vector<std::thread> pool;
        const size_t chunk = (n + size_t(t) - 1) / size_t(t);
        for (size_t wlo = 0; wlo < n; wlo += chunk)
          pool.emplace_back(work, wlo, std::min(n, wlo + chunk));
        for (auto& th : pool) th.join();
      }
      GradientSet grads = GradientSet::zeros(params.cfg);
      double loss_sum = 0.0;
      {
        // same pairwise index tree as the float trainer
        size_t width = n;
        while (width > 1) {
          const size_t half = width / 2;
          for (size_t i = 0; i < half; ++i) {
            std::vector<std::vector<double>*> av;
            per[i].for_each_tensor(
                [&](const char*, std::vector<double>& v) { av.push_back(&v); });
            size_t kk = 0;
            per[half * 2 - 1 - i].for_each_tensor([&](const char*, std::vector<double>& v) {
              std::vector<double>& dst = *av[kk++];
              for (size_t j = 0; j < v.size(); ++j) dst[j] += v[j];
            });
            losses[i] += losses[half * 2 - 1 - i];
          }
          if (width % 2 == 1) {
            per[half] = std::move(per[width - 1]);
            losses[half] = losses[width - 1];
            width = half + 1;
          } else {
            width = half;
          }
        }
        grads = std::move(per[0]);
        loss_sum = losses[0];
      }
      grads.for_each_tensor([&](const char*, std::vector<double>& v) {
        for (double& x : v) x /= double(n);
      });
      adam_step(params, grads, adam, cfg.lr);
      epoch_loss += loss_sum / double(n);
      ++batches;
    }

    const ModelParams fqp = fake_quant_weights(params, scales);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / double(std::max<int64_t>(1, batches));
    log.valid_loss = valid_set.empty() ? log.train_loss : set_loss(fqp, valid_set);
    log.lr = cfg.lr;
    if (!valid_set.empty()) {
      int64_t correct = 0;
      for (const BeatSample* s : valid_set)
        if (fake_quant_predict(fqp, scales, *s) == int(s->label)) ++correct;
      log.valid_accuracy = double(correct) / double(valid_set.size());
    }
    result.log.push_back(log);
    if (log.valid_loss < best_valid) {
      best_valid = log.valid_loss;
      best_params = params;
    }
  }

  result.params = best_params;
  result.exported = build_quantized(fake_quant_weights(best_params, scales), scales);
  return result;
}

}  // namespace ecgt
