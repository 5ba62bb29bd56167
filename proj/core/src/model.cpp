#include "ecgt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgt {

void ModelConfig::validate() const {
  if (input_len <= 0 || embed_dim <= 0 || kernel <= 0 || heads <= 0 || hidden <= 0 ||
      classes <= 0)
    throw std::invalid_argument("config: all dimensions must be positive");
  if (embed_dim % heads != 0)
    throw std::invalid_argument("config: embed_dim must be divisible by heads");
  if (input_len % kernel != 0)
    throw std::invalid_argument("config: input_len must be divisible by kernel");
  if (use_rr && rr_dim != 2) throw std::invalid_argument("config: rr_dim must be 2");
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int E = cfg.embed_dim, S = cfg.seq_len(), h = cfg.hidden, k = cfg.kernel;
  ModelParams p;
  p.cfg = cfg;
  p.conv_w = Matrix(k, E);
  p.conv_b.assign(size_t(E), 0.0);
  p.pos = Matrix(S, E);
  p.rr_w = Matrix(2, 2);
  p.ln1_g.assign(size_t(E), 0.0);
  p.ln1_b.assign(size_t(E), 0.0);
  p.wq = Matrix(E, E);
  p.wk = Matrix(E, E);
  p.wv = Matrix(E, E);
  p.wo = Matrix(E, E);
  p.bq.assign(size_t(E), 0.0);
  p.bk.assign(size_t(E), 0.0);
  p.bv.assign(size_t(E), 0.0);
  p.bo.assign(size_t(E), 0.0);
  p.ln2_g.assign(size_t(E), 0.0);
  p.ln2_b.assign(size_t(E), 0.0);
  p.ff1_w = Matrix(E, h);
  p.ff1_b.assign(size_t(h), 0.0);
  p.ff2_w = Matrix(h, E);
  p.ff2_b.assign(size_t(E), 0.0);
  p.ln3_g.assign(size_t(E), 0.0);
  p.ln3_b.assign(size_t(E), 0.0);
  p.head_w = Matrix(cfg.head_in(), cfg.classes);
  p.head_b.assign(size_t(cfg.classes), 0.0);
  return p;
}

namespace {

void glorot_fill(Matrix& m, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (double& v : m.vec()) v = rng.uniform(-limit, limit);
}

}  // namespace

ModelParams ModelParams::glorot_init(const ModelConfig& cfg, uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng rng(seed);
  const int E = cfg.embed_dim, h = cfg.hidden, k = cfg.kernel;
  glorot_fill(p.conv_w, k, E, rng);
  for (double& v : p.pos.vec()) v = rng.normal(0.0, 0.02);
  glorot_fill(p.rr_w, 2, 2, rng);
  glorot_fill(p.wq, E, E, rng);
  glorot_fill(p.wk, E, E, rng);
  glorot_fill(p.wv, E, E, rng);
  glorot_fill(p.wo, E, E, rng);
  glorot_fill(p.ff1_w, E, h, rng);
  glorot_fill(p.ff2_w, h, E, rng);
  glorot_fill(p.head_w, cfg.head_in(), cfg.classes, rng);
  std::fill(p.ln1_g.begin(), p.ln1_g.end(), 1.0);
  std::fill(p.ln2_g.begin(), p.ln2_g.end(), 1.0);
  std::fill(p.ln3_g.begin(), p.ln3_g.end(), 1.0);
  return p;
}

size_t ModelParams::scalar_count() const {
  size_t n = 0;
  for_each_tensor([&](const char*, const std::vector<double>& v) { n += v.size(); });
  return n;
}

double gelu(double x) {
  // Phi(x) = (1 + erf(x / sqrt(2))) / 2
  return x * 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
}

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

void softmax_rows(Matrix& m) {
  for (int i = 0; i < m.rows(); ++i) {
    double mx = m(i, 0);
    for (int j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols(); ++j) {
      const double e = std::exp(m(i, j) - mx);
      m(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols(); ++j) m(i, j) /= sum;
  }
}

Matrix layer_norm(const Matrix& x, const std::vector<double>& gamma,
                  const std::vector<double>& beta) {
  const int E = x.cols();
  if (int(gamma.size()) != E || int(beta.size()) != E)
    throw std::invalid_argument("layer_norm: gamma/beta size mismatch");
  Matrix out(x.rows(), E);
  for (int t = 0; t < x.rows(); ++t) {
    double mu = 0.0;
    for (int e = 0; e < E; ++e) mu += x(t, e);
    mu /= E;
    double var = 0.0;
    for (int e = 0; e < E; ++e) {
      const double d = x(t, e) - mu;
      var += d * d;
    }
    var /= E;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int e = 0; e < E; ++e)
      out(t, e) = (x(t, e) - mu) * inv * gamma[size_t(e)] + beta[size_t(e)];
  }
  return out;
}

Matrix conv_embed(const std::vector<double>& window, const ModelParams& p) {
  const auto& cfg = p.cfg;
  if (int(window.size()) != cfg.input_len)
    throw std::invalid_argument("conv_embed: window length mismatch");
  const int E = cfg.embed_dim, S = cfg.seq_len(), k = cfg.kernel;
  Matrix out(S, E);
  for (int t = 0; t < S; ++t) {
    for (int e = 0; e < E; ++e) {
      double acc = p.conv_b[size_t(e)];
      for (int j = 0; j < k; ++j) acc += p.conv_w(j, e) * window[size_t(t * k + j)];
      out(t, e) = acc + p.pos(t, e);
    }
  }
  return out;
}

namespace {

Matrix project(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  Matrix out = matmul(x, w);
  for (int t = 0; t < out.rows(); ++t)
    for (int j = 0; j < out.cols(); ++j) out(t, j) += b[size_t(j)];
  return out;
}

// attention core shared by the public op and forward(); fills cache slots
// when given one
Matrix attention_impl(const Matrix& x, const ModelParams& p, ForwardCache* cache) {
  const auto& cfg = p.cfg;
  const int S = x.rows(), E = x.cols(), H = cfg.heads, P = cfg.head_dim();
  Matrix q = project(x, p.wq, p.bq);
  Matrix k = project(x, p.wk, p.bk);
  Matrix v = project(x, p.wv, p.bv);
  Matrix ctx(S, E);
  std::vector<Matrix> probs;
  probs.reserve(size_t(H));
  const double scale = 1.0 / std::sqrt(double(P));
  for (int hd = 0; hd < H; ++hd) {
    const int off = hd * P;
    Matrix scores(S, S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        double s = 0.0;
        for (int d = 0; d < P; ++d) s += q(i, off + d) * k(j, off + d);
        scores(i, j) = s * scale;
      }
    softmax_rows(scores);
    for (int i = 0; i < S; ++i)
      for (int d = 0; d < P; ++d) {
        double s = 0.0;
        for (int j = 0; j < S; ++j) s += scores(i, j) * v(j, off + d);
        ctx(i, off + d) = s;
      }
    probs.push_back(std::move(scores));
  }
  Matrix out = project(ctx, p.wo, p.bo);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->ctx = std::move(ctx);
  }
  return out;
}

}  // namespace

Matrix attention(const Matrix& x, const ModelParams& p) {
  return attention_impl(x, p, nullptr);
}

std::vector<double> forward(const std::vector<double>& window, const std::array<double, 2>& rr,
                            const ModelParams& p, ForwardCache* cache) {
  const auto& cfg = p.cfg;
  const int S = cfg.seq_len(), E = cfg.embed_dim, h = cfg.hidden;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.window = window;
  c.rr = rr;

  c.x0 = conv_embed(window, p);
  c.n1 = layer_norm(c.x0, p.ln1_g, p.ln1_b);
  c.attn_out = attention_impl(c.n1, p, &c);
  c.x1 = c.x0;
  add_inplace(c.x1, c.attn_out);

  c.n2 = layer_norm(c.x1, p.ln2_g, p.ln2_b);
  c.h1 = project(c.n2, p.ff1_w, p.ff1_b);
  c.g1 = Matrix(S, h);
  for (size_t i = 0; i < c.h1.size(); ++i) c.g1.vec()[i] = gelu(c.h1.vec()[i]);
  c.h2 = project(c.g1, p.ff2_w, p.ff2_b);
  c.g2 = Matrix(S, E);
  for (size_t i = 0; i < c.h2.size(); ++i) c.g2.vec()[i] = gelu(c.h2.vec()[i]);
  c.x2 = c.x1;
  add_inplace(c.x2, c.g2);

  c.n3 = layer_norm(c.x2, p.ln3_g, p.ln3_b);
  c.pooled.assign(size_t(E), 0.0);
  for (int t = 0; t < S; ++t)
    for (int e = 0; e < E; ++e) c.pooled[size_t(e)] += c.n3(t, e);
  for (double& v : c.pooled) v /= S;

  c.head_in = c.pooled;
  if (cfg.use_rr) {
    c.rr_emb.assign(2, 0.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c.rr_emb[size_t(i)] += p.rr_w(i, j) * rr[size_t(j)];
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

int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t E = cfg.embed_dim, S = cfg.seq_len(), h = cfg.hidden, k = cfg.kernel;
  const int64_t cls = cfg.classes;
  int64_t n = 0;
  n += k * E + E;          // conv
  n += S * E;              // positional embedding
  if (cfg.use_rr) n += 4;  // rr projection, no bias
  n += 3 * 2 * E;          // three layer norms
  n += 4 * (E * E + E);    // q, k, v, o projections
  n += E * h + h;          // ff1
  n += h * E + E;          // ff2
  n += int64_t(cfg.head_in()) * cls + cls;  // classification head
  return n;
}

ComplexityEstimate count_ops_and_memory(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t E = cfg.embed_dim, S = cfg.seq_len(), h = cfg.hidden, k = cfg.kernel;
  const int64_t H = cfg.heads, P = cfg.head_dim(), cls = cfg.classes;
  int64_t macs = 0;
  macs += E * S * k;        // conv embedding
  macs += 3 * S * E * E;    // q, k, v projections
  macs += H * S * S * P;    // attention scores
  macs += H * S * S * P;    // context aggregation
  macs += S * E * E;        // output projection
  macs += S * E * h;        // ff1
  macs += S * h * E;        // ff2
  if (cfg.use_rr) macs += 4;                // rr projection
  macs += int64_t(cfg.head_in()) * cls;     // head
  ComplexityEstimate est;
  est.ops = 2 * macs;
  // 8-bit deployment estimate: weights, the per-head attention matrix, the
  // live sequence buffers of a two-buffer schedule (embeddings, q, k, v,
  // attention output, residual, ffn output), one per-position ffn hidden
  // vector, norm/pooling scratch, and the logits.
  est.footprint_bytes = count_params(cfg) + H * S * S + 7 * E * S + h + 24 * E + cls;
  return est;
}

}  // namespace ecgt
