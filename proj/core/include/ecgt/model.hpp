#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgt/rng.hpp"
#include "ecgt/tensor.hpp"

namespace ecgt {

struct ModelConfig {
  int input_len = 198;
  int embed_dim = 16;   // E
  int kernel = 3;       // k, stride = k
  int heads = 8;        // H
  int hidden = 128;     // h
  int classes = 5;
  int rr_dim = 2;
  bool use_rr = true;

  int seq_len() const { return input_len / kernel; }           // S
  int head_dim() const { return embed_dim / heads; }           // P = E/H
  int head_in() const { return embed_dim + (use_rr ? rr_dim : 0); }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Every learnable tensor. Activations run as (S x E) token rows; conv
// weights are (k x E), dense weights are (in x out).
struct ModelParams {
  ModelConfig cfg;

  Matrix conv_w;              // k x E
  std::vector<double> conv_b; // E
  Matrix pos;                 // S x E
  Matrix rr_w;                // 2 x 2, no bias

  std::vector<double> ln1_g, ln1_b;  // E each
  Matrix wq, wk, wv, wo;             // E x E
  std::vector<double> bq, bk, bv, bo;

  std::vector<double> ln2_g, ln2_b;
  Matrix ff1_w;               // E x h
  std::vector<double> ff1_b;  // h
  Matrix ff2_w;               // h x E
  std::vector<double> ff2_b;  // E

  std::vector<double> ln3_g, ln3_b;
  Matrix head_w;              // head_in x classes
  std::vector<double> head_b; // classes

  static ModelParams zeros(const ModelConfig& cfg);
  static ModelParams glorot_init(const ModelConfig& cfg, uint64_t seed);

  // visit every tensor as a flat span, in a fixed serialization order
  template <typename F>
  void for_each_tensor(F&& f) {
    f("conv_w", conv_w.vec());
    f("conv_b", conv_b);
    f("pos", pos.vec());
    if (cfg.use_rr) f("rr_w", rr_w.vec());
    f("ln1_g", ln1_g);
    f("ln1_b", ln1_b);
    f("wq", wq.vec());
    f("bq", bq);
    f("wk", wk.vec());
    f("bk", bk);
    f("wv", wv.vec());
    f("bv", bv);
    f("wo", wo.vec());
    f("bo", bo);
    f("ln2_g", ln2_g);
    f("ln2_b", ln2_b);
    f("ff1_w", ff1_w.vec());
    f("ff1_b", ff1_b);
    f("ff2_w", ff2_w.vec());
    f("ff2_b", ff2_b);
    f("ln3_g", ln3_g);
    f("ln3_b", ln3_b);
    f("head_w", head_w.vec());
    f("head_b", head_b);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const char* name, std::vector<double>& v) { f(name, std::as_const(v)); });
  }

  size_t scalar_count() const;
};

inline constexpr double kLayerNormEps = 1e-5;

// exact Gaussian-CDF GELU: x * Phi(x)
double gelu(double x);
double gelu_grad(double x);

// per-row softmax in place
void softmax_rows(Matrix& m);

// LayerNorm over the embedding axis, one token (row) at a time.
Matrix layer_norm(const Matrix& x, const std::vector<double>& gamma,
                  const std::vector<double>& beta);

// conv embedding + positional embedding: window (input_len) -> S x E
Matrix conv_embed(const std::vector<double>& window, const ModelParams& p);

// Multi-head self-attention on (S x E) token rows; residual is the caller's.
Matrix attention(const Matrix& x, const ModelParams& p);

// Intermediates cached by forward() for the backward pass.
struct ForwardCache {
  std::vector<double> window;
  std::array<double, 2> rr{};
  Matrix x0;           // conv + pos
  Matrix n1;           // ln1(x0)
  Matrix q, k, v;      // projections
  std::vector<Matrix> probs;  // per-head softmax rows (S x S)
  Matrix ctx;          // concatenated head outputs (S x E)
  Matrix attn_out;     // ctx * wo + bo
  Matrix x1;           // x0 + attn_out
  Matrix n2;           // ln2(x1)
  Matrix h1;           // n2 * ff1 + b (S x h)
  Matrix g1;           // gelu(h1)
  Matrix h2;           // g1 * ff2 + b (S x E)
  Matrix g2;           // gelu(h2)
  Matrix x2;           // x1 + g2
  Matrix n3;           // ln3(x2)
  std::vector<double> pooled;   // mean over S (E)
  std::vector<double> rr_emb;   // rr_w * rr (2)
  std::vector<double> head_in;  // concat
  std::vector<double> logits;   // classes
};

std::vector<double> forward(const std::vector<double>& window, const std::array<double, 2>& rr,
                            const ModelParams& p, ForwardCache* cache = nullptr);

// Analytic complexity estimators for the architecture as configured.
int64_t count_params(const ModelConfig& cfg);

struct ComplexityEstimate {
  int64_t ops = 0;              // 2 * multiply-accumulates end to end
  int64_t footprint_bytes = 0;  // 8-bit weights + peak concurrent activations
  double mops() const { return double(ops) / 1e6; }
};
ComplexityEstimate count_ops_and_memory(const ModelConfig& cfg);

}  // namespace ecgt
