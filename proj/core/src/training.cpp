#include "ecgt/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ecgt {

// d(loss)/d(logits) for softmax cross-entropy: p - onehot
std::vector<double> ce_logit_grad(const std::vector<double>& logits, int label, double* loss) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  if (loss) *loss = -std::log(std::max(p[size_t(label)], 1e-300));
  p[size_t(label)] -= 1.0;
  return p;
}

namespace {

// backward through layer_norm given the cached input rows
void layer_norm_backward(const Matrix& x, const std::vector<double>& gamma, const Matrix& dout,
                         Matrix& dx, std::vector<double>& dgamma, std::vector<double>& dbeta) {
  const int E = x.cols();
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
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int e = 0; e < E; ++e) {
      const double xhat = (x(t, e) - mu) * inv;
      const double dy = dout(t, e);
      dgamma[size_t(e)] += dy * xhat;
      dbeta[size_t(e)] += dy;
      const double dxhat = dy * gamma[size_t(e)];
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * xhat;
    }
    mean_dxhat /= E;
    mean_dxhat_xhat /= E;
    for (int e = 0; e < E; ++e) {
      const double xhat = (x(t, e) - mu) * inv;
      const double dxhat = dout(t, e) * gamma[size_t(e)];
      dx(t, e) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
  }
}

void accum_dense_backward(const Matrix& input, const Matrix& dout, const Matrix& w, Matrix& dw,
                          std::vector<double>& db, Matrix& dinput) {
  // dw += input^T * dout; db += colsum(dout); dinput += dout * w^T
  Matrix dwi = matmul_tn(input, dout);
  add_inplace(dw, dwi);
  for (int t = 0; t < dout.rows(); ++t)
    for (int j = 0; j < dout.cols(); ++j) db[size_t(j)] += dout(t, j);
  Matrix dxi = matmul_nt(dout, w);
  add_inplace(dinput, dxi);
}

}  // namespace

void backward_from_logits(const ModelParams& p, const ForwardCache& c,
                          const std::vector<double>& dlogits, GradientSet& g) {
  const auto& cfg = p.cfg;
  const int S = cfg.seq_len(), E = cfg.embed_dim, H = cfg.heads, P = cfg.head_dim();

  // head
  std::vector<double> dhead_in(size_t(cfg.head_in()), 0.0);
  for (int o = 0; o < cfg.classes; ++o) {
    const double dl = dlogits[size_t(o)];
    g.head_b[size_t(o)] += dl;
    for (int i = 0; i < cfg.head_in(); ++i) {
      g.head_w(i, o) += c.head_in[size_t(i)] * dl;
      dhead_in[size_t(i)] += p.head_w(i, o) * dl;
    }
  }
  if (cfg.use_rr) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) g.rr_w(i, j) += dhead_in[size_t(E + i)] * c.rr[size_t(j)];
  }

  // mean pool
  Matrix dn3(S, E);
  for (int t = 0; t < S; ++t)
    for (int e = 0; e < E; ++e) dn3(t, e) = dhead_in[size_t(e)] / S;

  Matrix dx2(S, E);
  layer_norm_backward(c.x2, p.ln3_g, dn3, dx2, g.ln3_g, g.ln3_b);

  // x2 = x1 + gelu(h2)
  Matrix dx1 = dx2;
  Matrix dh2(S, E);
  for (size_t i = 0; i < dh2.size(); ++i)
    dh2.vec()[i] = dx2.vec()[i] * gelu_grad(c.h2.vec()[i]);

  Matrix dg1(S, cfg.hidden);
  accum_dense_backward(c.g1, dh2, p.ff2_w, g.ff2_w, g.ff2_b, dg1);
  Matrix dh1(S, cfg.hidden);
  for (size_t i = 0; i < dh1.size(); ++i)
    dh1.vec()[i] = dg1.vec()[i] * gelu_grad(c.h1.vec()[i]);

  Matrix dn2(S, E);
  accum_dense_backward(c.n2, dh1, p.ff1_w, g.ff1_w, g.ff1_b, dn2);
  layer_norm_backward(c.x1, p.ln2_g, dn2, dx1, g.ln2_g, g.ln2_b);

  // x1 = x0 + attention(n1)
  Matrix dx0 = dx1;
  Matrix dctx(S, E);
  accum_dense_backward(c.ctx, dx1, p.wo, g.wo, g.bo, dctx);

  Matrix dq(S, E), dk(S, E), dv(S, E);
  const double scale = 1.0 / std::sqrt(double(P));
  for (int hd = 0; hd < H; ++hd) {
    const int off = hd * P;
    const Matrix& A = c.probs[size_t(hd)];
    // dA = dctx_h * V_h^T ; dV_h = A^T * dctx_h
    Matrix dA(S, S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        double s = 0.0;
        for (int d = 0; d < P; ++d) s += dctx(i, off + d) * c.v(j, off + d);
        dA(i, j) = s;
      }
    for (int j = 0; j < S; ++j)
      for (int d = 0; d < P; ++d) {
        double s = 0.0;
        for (int i = 0; i < S; ++i) s += A(i, j) * dctx(i, off + d);
        dv(j, off + d) += s;
      }
    // softmax rows: ds = A o (dA - rowdot(dA, A))
    for (int i = 0; i < S; ++i) {
      double dot = 0.0;
      for (int j = 0; j < S; ++j) dot += dA(i, j) * A(i, j);
      for (int j = 0; j < S; ++j) dA(i, j) = A(i, j) * (dA(i, j) - dot);
    }
    // scores = scale * Q_h K_h^T
    for (int i = 0; i < S; ++i)
      for (int d = 0; d < P; ++d) {
        double s = 0.0;
        for (int j = 0; j < S; ++j) s += dA(i, j) * c.k(j, off + d);
        dq(i, off + d) += scale * s;
      }
    for (int j = 0; j < S; ++j)
      for (int d = 0; d < P; ++d) {
        double s = 0.0;
        for (int i = 0; i < S; ++i) s += dA(i, j) * c.q(i, off + d);
        dk(j, off + d) += scale * s;
      }
  }

  Matrix dn1(S, E);
  accum_dense_backward(c.n1, dq, p.wq, g.wq, g.bq, dn1);
  accum_dense_backward(c.n1, dk, p.wk, g.wk, g.bk, dn1);
  accum_dense_backward(c.n1, dv, p.wv, g.wv, g.bv, dn1);
  layer_norm_backward(c.x0, p.ln1_g, dn1, dx0, g.ln1_g, g.ln1_b);

  // x0 = conv(window) + pos
  add_inplace(g.pos, dx0);
  for (int t = 0; t < S; ++t)
    for (int e = 0; e < E; ++e) {
      const double d = dx0(t, e);
      g.conv_b[size_t(e)] += d;
      for (int j = 0; j < cfg.kernel; ++j)
        g.conv_w(j, e) += d * c.window[size_t(t * cfg.kernel + j)];
    }
}

namespace {

// reduced configs read a prefix of the fixed-size window storage
std::vector<double> sample_input(const BeatSample& s, const ModelConfig& cfg) {
  return std::vector<double>(s.window.begin(), s.window.begin() + cfg.input_len);
}

std::array<double, 2> sample_rr(const BeatSample& s) {
  return {double(s.rr_norm[0]), double(s.rr_norm[1])};
}

void scale_grads(GradientSet& g, double f) {
  g.for_each_tensor([&](const char*, std::vector<double>& v) {
    for (double& x : v) x *= f;
  });
}

void add_grads(GradientSet& a, const GradientSet& b) {
  // walk both tensor lists in lockstep
  std::vector<std::vector<double>*> av;
  a.for_each_tensor([&](const char*, std::vector<double>& v) { av.push_back(&v); });
  size_t k = 0;
  const_cast<GradientSet&>(b).for_each_tensor([&](const char*, std::vector<double>& v) {
    std::vector<double>& dst = *av[k++];
    for (size_t i = 0; i < v.size(); ++i) dst[i] += v[i];
  });
}

}  // namespace

double sample_loss(const ModelParams& params, const BeatSample& s) {
  auto logits = forward(sample_input(s, params.cfg), sample_rr(s), params);
  double loss = 0.0;
  ce_logit_grad(logits, int(s.label), &loss);
  return loss;
}

void sample_grad(const ModelParams& params, const BeatSample& s, GradientSet& grads) {
  ForwardCache cache;
  forward(sample_input(s, params.cfg), sample_rr(s), params, &cache);
  double loss = 0.0;
  auto dlogits = ce_logit_grad(cache.logits, int(s.label), &loss);
  backward_from_logits(params, cache, dlogits, grads);
}

double loss_and_grad(const ModelParams& params, const std::vector<const BeatSample*>& batch,
                     GradientSet& grads, int threads) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const size_t n = batch.size();
  std::vector<GradientSet> per(n, GradientSet::zeros(params.cfg));
  std::vector<double> losses(n, 0.0);

  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      ForwardCache cache;
      forward(sample_input(*batch[i], params.cfg), sample_rr(*batch[i]), params, &cache);
      double loss = 0.0;
      auto dlogits = ce_logit_grad(cache.logits, int(batch[i]->label), &loss);
      losses[i] = loss;
      backward_from_logits(params, cache, dlogits, per[i]);
    }
  };
  const int t = std::max(1, threads);
  if (t == 1 || n < 2) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (n + size_t(t) - 1) / size_t(t);
    for (size_t lo = 0; lo < n; lo += chunk)
      pool.emplace_back(work, lo, std::min(n, lo + chunk));
    for (auto& th : pool) th.join();
  }

  // pairwise tree reduction keyed on sample index: the summation order
  // depends only on the batch size, never on the thread count
  size_t width = n;
  while (width > 1) {
    const size_t half = width / 2;
    for (size_t i = 0; i < half; ++i) {
      add_grads(per[i], per[half * 2 - 1 - i]);
      losses[i] += losses[half * 2 - 1 - i];
    }
    if (width % 2 == 1) {
      // odd element stays in place as the new last slot
      per[half] = std::move(per[width - 1]);
      losses[half] = losses[width - 1];
      width = half + 1;
    } else {
      width = half;
    }
  }
  grads = std::move(per[0]);
  const double inv = 1.0 / double(n);
  scale_grads(grads, inv);
  if (!std::isfinite(losses[0]))
    throw std::runtime_error("loss_and_grad: non-finite loss");
  return losses[0] * inv;
}

AdamState AdamState::init(const ModelConfig& cfg) {
  AdamState s;
  s.m = GradientSet::zeros(cfg);
  s.v = GradientSet::zeros(cfg);
  s.step = 0;
  return s;
}

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, double(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, double(state.step));

  std::vector<std::vector<double>*> pv, mv, vv;
  params.for_each_tensor([&](const char*, std::vector<double>& v) { pv.push_back(&v); });
  state.m.for_each_tensor([&](const char*, std::vector<double>& v) { mv.push_back(&v); });
  state.v.for_each_tensor([&](const char*, std::vector<double>& v) { vv.push_back(&v); });
  size_t k = 0;
  const_cast<GradientSet&>(grads).for_each_tensor([&](const char*, std::vector<double>& gv) {
    std::vector<double>& p = *pv[k];
    std::vector<double>& m = *mv[k];
    std::vector<double>& v = *vv[k];
    ++k;
    for (size_t i = 0; i < gv.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gv[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gv[i] * gv[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  });
}

double plateau_schedule(double valid_loss, const PlateauSpec& spec, PlateauState& state) {
  if (!state.primed) {
    state.best = valid_loss;
    state.primed = true;
    return state.lr;
  }
  if (valid_loss < state.best - spec.improvement) {
    state.best = valid_loss;
    state.bad_epochs = 0;
  } else {
    state.bad_epochs += 1;
    if (state.bad_epochs >= spec.patience) {
      state.lr = std::max(state.lr * spec.factor, spec.min_lr);
      state.bad_epochs = 0;
    }
  }
  return state.lr;
}

int predict(const ModelParams& params, const BeatSample& s) {
  auto logits = forward(sample_input(s, params.cfg), sample_rr(s), params);
  int best = 0;
  for (int i = 1; i < int(logits.size()); ++i)
    if (logits[size_t(i)] > logits[size_t(best)]) best = i;
  return best;
}

double accuracy(const ModelParams& params, const std::vector<const BeatSample*>& set,
                int threads) {
  if (set.empty()) return 0.0;
  std::vector<int> hit(set.size(), 0);
  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      hit[i] = predict(params, *set[i]) == int(set[i]->label) ? 1 : 0;
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

double mean_loss(const ModelParams& params, const std::vector<const BeatSample*>& set,
                 int threads) {
  if (set.empty()) return 0.0;
  std::vector<double> losses(set.size(), 0.0);
  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) losses[i] = sample_loss(params, *set[i]);
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
  // fixed left-to-right order keeps the mean reproducible
  double s = 0.0;
  for (double v : losses) s += v;
  return s / double(set.size());
}

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<const BeatSample*>& train_set,
                  const std::vector<const BeatSample*>& valid_set,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  ModelConfig cfg = mcfg;
  cfg.use_rr = tcfg.use_rr;
  cfg.validate();

  ModelParams params = ModelParams::glorot_init(cfg, tcfg.seed);
  AdamState adam = AdamState::init(cfg);
  PlateauState sched;
  sched.lr = tcfg.lr0;

  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tcfg.seed, uint64_t(epoch) + 1));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (size_t lo = 0; lo < order.size(); lo += size_t(tcfg.batch_size)) {
      const size_t hi = std::min(order.size(), lo + size_t(tcfg.batch_size));
      std::vector<const BeatSample*> batch;
      batch.reserve(hi - lo);
      for (size_t i = lo; i < hi; ++i) batch.push_back(train_set[order[i]]);
      GradientSet grads = GradientSet::zeros(cfg);
      epoch_loss += loss_and_grad(params, batch, grads, tcfg.threads);
      adam_step(params, grads, adam, sched.lr);
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / double(std::max<int64_t>(1, batches));
    log.valid_loss = valid_set.empty() ? log.train_loss
                                       : mean_loss(params, valid_set, tcfg.threads);
    log.valid_accuracy = valid_set.empty() ? 0.0 : accuracy(params, valid_set, tcfg.threads);
    log.lr = sched.lr;
    plateau_schedule(log.valid_loss, tcfg.plateau, sched);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = log.valid_loss;
      result.best_epoch = epoch;
      result.best_params = params;
    }
  }
  if (result.best_epoch < 0) {
    result.best_params = params;
    result.best_epoch = tcfg.epochs - 1;
  }
  return result;
}

}  // namespace ecgt
