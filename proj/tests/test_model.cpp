#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ecgt/model.hpp"
#include "ecgt/rng.hpp"

using namespace ecgt;

namespace {

// direct dense evaluation of softmax(Q K^T / sqrt(d)) V per head, written
// without reusing any library helper
std::vector<std::vector<double>> attention_bruteforce(const Matrix& x, const ModelParams& p) {
  const int S = x.rows(), E = x.cols(), H = p.cfg.heads, P = E / H;
  auto proj = [&](const Matrix& w, const std::vector<double>& b) {
    std::vector<std::vector<double>> out(size_t(S), std::vector<double>(size_t(E), 0.0));
    for (int t = 0; t < S; ++t)
      for (int j = 0; j < E; ++j) {
        double acc = b[size_t(j)];
        for (int i = 0; i < E; ++i) acc += x(t, i) * w(i, j);
        out[size_t(t)][size_t(j)] = acc;
      }
    return out;
  };
  const auto q = proj(p.wq, p.bq), k = proj(p.wk, p.bk), v = proj(p.wv, p.bv);
  std::vector<std::vector<double>> ctx(size_t(S), std::vector<double>(size_t(E), 0.0));
  for (int hd = 0; hd < H; ++hd) {
    const int off = hd * P;
    for (int i = 0; i < S; ++i) {
      std::vector<double> row(size_t(S), 0.0);
      double mx = -1e300;
      for (int j = 0; j < S; ++j) {
        double s = 0.0;
        for (int d = 0; d < P; ++d)
          s += q[size_t(i)][size_t(off + d)] * k[size_t(j)][size_t(off + d)];
        row[size_t(j)] = s / std::sqrt(double(P));
        mx = std::max(mx, row[size_t(j)]);
      }
      double z = 0.0;
      for (double& r : row) {
        r = std::exp(r - mx);
        z += r;
      }
      for (double& r : row) r /= z;
      for (int d = 0; d < P; ++d) {
        double acc = 0.0;
        for (int j = 0; j < S; ++j) acc += row[size_t(j)] * v[size_t(j)][size_t(off + d)];
        ctx[size_t(i)][size_t(off + d)] = acc;
      }
    }
  }
  std::vector<std::vector<double>> out(size_t(S), std::vector<double>(size_t(E), 0.0));
  for (int t = 0; t < S; ++t)
    for (int j = 0; j < E; ++j) {
      double acc = p.bo[size_t(j)];
      for (int i = 0; i < E; ++i) acc += ctx[size_t(t)][size_t(i)] * p.wo(i, j);
      out[size_t(t)][size_t(j)] = acc;
    }
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_len = 18;  // S = 6 with k = 3
  c.embed_dim = 4;
  c.heads = 2;
  c.hidden = 8;
  return c;
}

void randomize(ModelParams& p, uint64_t seed) {
  Rng rng(seed);
  p.for_each_tensor([&](const char*, std::vector<double>& v) {
    for (double& x : v) x = rng.uniform(-0.9, 0.9);
  });
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK(c.seq_len() == 66);
  CHECK(c.head_dim() == 2);
  c.embed_dim = 15;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.input_len = 197;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("conv_embed: zeros, ramp with picker kernel, output shape") {
  ModelConfig cfg;
  ModelParams p = ModelParams::zeros(cfg);
  std::vector<double> zero_win(198, 0.0);
  Matrix out = conv_embed(zero_win, p);
  CHECK(out.rows() == 66);
  CHECK(out.cols() == 16);
  for (double v : out.vec()) CHECK(v == 0.0);

  // kernel [1, 0, 0] picks window[3t]; on the ramp 0..197 that is 3t
  for (int e = 0; e < 16; ++e) p.conv_w(0, e) = 1.0;
  std::vector<double> ramp(198);
  for (int i = 0; i < 198; ++i) ramp[size_t(i)] = double(i);
  out = conv_embed(ramp, p);
  for (int t = 0; t < 66; ++t)
    for (int e = 0; e < 16; ++e) REQUIRE(out(t, e) == doctest::Approx(3.0 * t));

  CHECK_THROWS_AS(conv_embed(std::vector<double>(100, 0.0), p), std::invalid_argument);
}

TEST_CASE("layer_norm examples and brute-force oracle") {
  ModelConfig cfg = tiny_config();
  const int E = cfg.embed_dim;
  std::vector<double> g(size_t(E), 1.0), b(size_t(E), 0.0);

  Matrix c(1, E);
  for (int e = 0; e < E; ++e) c(0, e) = 5.5;
  Matrix out = layer_norm(c, g, b);
  for (double v : out.vec()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  // gamma = 0 broadcasts beta
  std::vector<double> g0(size_t(E), 0.0), bb(size_t(E), 0.0);
  for (int e = 0; e < E; ++e) bb[size_t(e)] = 0.25 * e;
  Matrix r(1, E);
  for (int e = 0; e < E; ++e) r(0, e) = e * e;
  out = layer_norm(r, g0, bb);
  for (int e = 0; e < E; ++e) CHECK(out(0, e) == doctest::Approx(bb[size_t(e)]));

  // random column against a direct mean/variance computation
  Rng rng(0x17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x(1, E);
    std::vector<double> gg(size_t(E), 0.0), bbeta(size_t(E), 0.0);
    for (int e = 0; e < E; ++e) {
      x(0, e) = rng.uniform(-3, 3);
      gg[size_t(e)] = rng.uniform(-2, 2);
      bbeta[size_t(e)] = rng.uniform(-1, 1);
    }
    out = layer_norm(x, gg, bbeta);
    double mu = 0.0;
    for (int e = 0; e < E; ++e) mu += x(0, e);
    mu /= E;
    double var = 0.0;
    for (int e = 0; e < E; ++e) var += (x(0, e) - mu) * (x(0, e) - mu);
    var /= E;
    for (int e = 0; e < E; ++e) {
      const double want =
          (x(0, e) - mu) / std::sqrt(var + 1e-5) * gg[size_t(e)] + bbeta[size_t(e)];
      REQUIRE(std::abs(out(0, e) - want) < 1e-12);
    }
  }
}

TEST_CASE("gelu: exact Gaussian-CDF form") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-9));
  // identity of x*Phi(x): gelu(x) - gelu(-x) == x
  Rng rng(0x6E1);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-6, 6);
    REQUIRE(gelu(x) - gelu(-x) == doctest::Approx(x).epsilon(1e-12));
  }
  // derivative against central differences
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-4, 4);
    const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    REQUIRE(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(0x50F);
  Matrix m(8, 12);
  for (double& v : m.vec()) v = rng.uniform(-10, 10);
  Matrix shifted = m;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) shifted(i, j) += 123.456;
  softmax_rows(m);
  softmax_rows(shifted);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j);
    REQUIRE(std::abs(s - 1.0) < 1e-9);
    for (int j = 0; j < m.cols(); ++j)
      REQUIRE(m(i, j) == doctest::Approx(shifted(i, j)).epsilon(1e-9));
  }
}

TEST_CASE("attention: W_Q = 0 gives the sequence mean of V") {
  ModelConfig cfg = tiny_config();
  ModelParams p = ModelParams::zeros(cfg);
  randomize(p, 5);
  p.wq.fill(0.0);
  std::fill(p.bq.begin(), p.bq.end(), 0.0);
  p.wo.fill(0.0);
  for (int e = 0; e < cfg.embed_dim; ++e) p.wo(e, e) = 1.0;  // identity out-proj
  std::fill(p.bo.begin(), p.bo.end(), 0.0);

  const int S = cfg.seq_len(), E = cfg.embed_dim;
  Matrix x(S, E);
  Rng rng(6);
  for (double& v : x.vec()) v = rng.uniform(-1, 1);
  const Matrix out = attention(x, p);

  // uniform rows average V over the sequence
  Matrix v = matmul(x, p.wv);
  for (int t = 0; t < S; ++t)
    for (int j = 0; j < E; ++j) v(t, j) += p.bv[size_t(j)];
  for (int j = 0; j < E; ++j) {
    double mean = 0.0;
    for (int t = 0; t < S; ++t) mean += v(t, j);
    mean /= S;
    for (int t = 0; t < S; ++t) REQUIRE(out(t, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("attention: S = 1 collapses softmax to the identity") {
  ModelConfig cfg = tiny_config();
  cfg.input_len = cfg.kernel;  // S = 1
  ModelParams p = ModelParams::zeros(cfg);
  randomize(p, 9);
  Matrix x(1, cfg.embed_dim);
  Rng rng(10);
  for (double& v : x.vec()) v = rng.uniform(-1, 1);
  const Matrix out = attention(x, p);
  // output = V . W_O + b_O since the single attention weight is 1
  Matrix v = matmul(x, p.wv);
  for (int j = 0; j < cfg.embed_dim; ++j) v(0, j) += p.bv[size_t(j)];
  Matrix want = matmul(v, p.wo);
  for (int j = 0; j < cfg.embed_dim; ++j) want(0, j) += p.bo[size_t(j)];
  for (int j = 0; j < cfg.embed_dim; ++j)
    REQUIRE(out(0, j) == doctest::Approx(want(0, j)).epsilon(1e-12));
}

TEST_CASE("attention matches the brute-force oracle on random 4x6 cases") {
  ModelConfig cfg = tiny_config();  // E=4, S=6
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ModelParams p = ModelParams::zeros(cfg);
    randomize(p, seed);
    Matrix x(cfg.seq_len(), cfg.embed_dim);
    Rng rng(seed * 77);
    for (double& v : x.vec()) v = rng.uniform(-2, 2);
    const Matrix got = attention(x, p);
    const auto want = attention_bruteforce(x, p);
    for (int t = 0; t < cfg.seq_len(); ++t)
      for (int e = 0; e < cfg.embed_dim; ++e)
        REQUIRE(std::abs(got(t, e) - want[size_t(t)][size_t(e)]) < 1e-12);
  }
}

TEST_CASE("forward: logits shape, zero params, determinism, cache shapes") {
  ModelConfig cfg;
  ModelParams p = ModelParams::zeros(cfg);
  std::vector<double> window(198, 0.3);
  auto logits = forward(window, {0.5, -0.5}, p);
  REQUIRE(logits.size() == 5);
  for (double v : logits) CHECK(v == 0.0);  // head bias is zero

  ModelParams pr = ModelParams::glorot_init(cfg, 0xF00D);
  ForwardCache cache;
  auto l1 = forward(window, {0.5, -0.5}, pr, &cache);
  auto l2 = forward(window, {0.5, -0.5}, pr);
  CHECK(l1 == l2);  // bit-stable

  // Table-style shapes at the default config
  CHECK(cache.x0.rows() == 66);
  CHECK(cache.x0.cols() == 16);
  CHECK(cache.h1.rows() == 66);
  CHECK(cache.h1.cols() == 128);
  CHECK(cache.h2.cols() == 16);
  CHECK(cache.probs.size() == 8);
  CHECK(cache.probs[0].rows() == 66);
  CHECK(cache.probs[0].cols() == 66);
  CHECK(cache.pooled.size() == 16);
  CHECK(cache.head_in.size() == 18);
  CHECK(cache.logits.size() == 5);
}

TEST_CASE("count_params reproduces the published totals") {
  ModelConfig cfg;  // E16 k3 H8 h128, with RR
  CHECK(count_params(cfg) == 6643);

  ModelConfig e32 = cfg;
  e32.embed_dim = 32;
  e32.use_rr = false;
  CHECK(count_params(e32) == 15173);

  ModelConfig h32 = cfg;
  h32.hidden = 32;
  h32.use_rr = false;
  CHECK(count_params(h32) == 3461);
}

TEST_CASE("count_params equals brute-force tensor enumeration on random configs") {
  Rng rng(0xC0DE);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg;
    cfg.heads = 1 << rng.below(4);                           // 1..8
    cfg.embed_dim = int(cfg.heads) * int(1 + rng.below(8));  // divisible by heads
    cfg.kernel = 1 + int(rng.below(6));
    cfg.input_len = cfg.kernel * int(10 + rng.below(90));
    cfg.hidden = 8 + int(rng.below(160));
    cfg.classes = 2 + int(rng.below(8));
    cfg.use_rr = rng.below(2) == 0;
    ModelParams p = ModelParams::zeros(cfg);
    REQUIRE(count_params(cfg) == int64_t(p.scalar_count()));
  }
}

TEST_CASE("ops and memory estimates sit inside the published bands") {
  ModelConfig cfg;
  const auto est = count_ops_and_memory(cfg);
  // 0.97 MOPS +/- 15%
  CHECK(est.mops() > 0.97 * 0.85);
  CHECK(est.mops() < 0.97 * 1.15);
  // 49 kB +/- 20%
  CHECK(double(est.footprint_bytes) > 49.0 * 1024 * 0.80);
  CHECK(double(est.footprint_bytes) < 49.0 * 1024 * 1.20);

  // the one infeasible design point: k = 1 exceeds the 128 kB budget
  ModelConfig k1 = cfg;
  k1.kernel = 1;
  CHECK(count_ops_and_memory(k1).footprint_bytes > 128 * 1024);
}
