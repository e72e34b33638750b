#include "morlbench/decision_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace morlbench {

void DtConfig::validate() const {
  if (context_length < 1) throw ValidationError("DtConfig: context_length must be >= 1");
  if (embed_dim % num_heads != 0) {
    throw ValidationError("DtConfig: embed_dim must be divisible by num_heads");
  }
  if (num_layers < 1) throw ValidationError("DtConfig: num_layers must be >= 1");
  if (dropout != 0.0) throw ValidationError("DtConfig: only dropout == 0 is supported");
  if (state_dim < 1 || num_actions < 1) {
    throw ValidationError("DtConfig: state_dim/num_actions not set");
  }
  if (num_objectives != 2) throw ValidationError("DtConfig: two objectives expected");
}

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (double& x : m.v) x = rng.uniform(-bound, bound);
  return m;
}

Matrix embedding_table(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.v) x = rng.uniform(-0.05, 0.05);
  return m;
}

struct LnCache {
  Matrix xhat;
  std::vector<double> inv;
};

// Row-wise layer norm restricted to valid rows; invalid rows stay zero.
Matrix ln_forward(const Matrix& x, const std::vector<double>& g, const std::vector<double>& b,
                  const std::vector<uint8_t>& valid, LnCache* cache) {
  const int e = x.cols;
  Matrix out(x.rows, e);
  if (cache) {
    cache->xhat = Matrix(x.rows, e);
    cache->inv.assign(x.rows, 0.0);
  }
  for (int i = 0; i < x.rows; ++i) {
    if (!valid[i]) continue;
    auto xr = x.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= e;
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= e;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    auto orow = out.row(i);
    for (int j = 0; j < e; ++j) {
      const double xhat = (xr[j] - mean) * inv;
      if (cache) cache->xhat.row(i)[j] = xhat;
      orow[j] = g[j] * xhat + b[j];
    }
    if (cache) cache->inv[i] = inv;
  }
  return out;
}

// Accumulates dg/db and returns dx for valid rows.
Matrix ln_backward(const Matrix& dy, const LnCache& cache, const std::vector<double>& g,
                   const std::vector<uint8_t>& valid, std::vector<double>& dg,
                   std::vector<double>& db) {
  const int e = dy.cols;
  Matrix dx(dy.rows, e);
  for (int i = 0; i < dy.rows; ++i) {
    if (!valid[i]) continue;
    auto dyr = dy.row(i);
    auto xhat = cache.xhat.row(i);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (int j = 0; j < e; ++j) {
      dg[j] += dyr[j] * xhat[j];
      db[j] += dyr[j];
      const double dxh = dyr[j] * g[j];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xhat[j];
    }
    mean_dxhat /= e;
    mean_dxhat_xhat /= e;
    auto dxr = dx.row(i);
    for (int j = 0; j < e; ++j) {
      const double dxh = dyr[j] * g[j];
      dxr[j] = cache.inv[i] * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat);
    }
  }
  return dx;
}

// out = x * w + b on valid rows only; invalid rows stay zero.
Matrix affine_rows(const Matrix& x, const Matrix& w, const std::vector<double>& b,
                   const std::vector<uint8_t>& valid) {
  Matrix out(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    if (!valid[i]) continue;
    const double* xr = x.v.data() + static_cast<size_t>(i) * x.cols;
    double* orow = out.v.data() + static_cast<size_t>(i) * out.cols;
    for (int c = 0; c < w.cols; ++c) orow[c] = b[c];
    for (int k = 0; k < x.cols; ++k) {
      const double a = xr[k];
      if (a == 0.0) continue;
      const double* wrow = w.v.data() + static_cast<size_t>(k) * w.cols;
      for (int c = 0; c < w.cols; ++c) orow[c] += a * wrow[c];
    }
  }
  return out;
}

// Gradients of affine_rows; dx is accumulated (+=).
void affine_backward_rows(const Matrix& x, const Matrix& w, const Matrix& dout,
                          const std::vector<uint8_t>& valid, Matrix& dw,
                          std::vector<double>& db, Matrix& dx) {
  for (int i = 0; i < x.rows; ++i) {
    if (!valid[i]) continue;
    const double* xr = x.v.data() + static_cast<size_t>(i) * x.cols;
    const double* dr = dout.v.data() + static_cast<size_t>(i) * dout.cols;
    for (int c = 0; c < dout.cols; ++c) db[c] += dr[c];
    for (int k = 0; k < x.cols; ++k) {
      const double a = xr[k];
      double* dwrow = dw.v.data() + static_cast<size_t>(k) * dw.cols;
      if (a != 0.0) {
        for (int c = 0; c < dout.cols; ++c) dwrow[c] += a * dr[c];
      }
    }
    double* dxr = dx.v.data() + static_cast<size_t>(i) * dx.cols;
    for (int k = 0; k < x.cols; ++k) {
      const double* wrow = w.v.data() + static_cast<size_t>(k) * w.cols;
      double acc = 0.0;
      for (int c = 0; c < dout.cols; ++c) acc += dr[c] * wrow[c];
      dxr[k] += acc;
    }
  }
}

void add_rows(Matrix& x, const Matrix& y, const std::vector<uint8_t>& valid) {
  for (int i = 0; i < x.rows; ++i) {
    if (!valid[i]) continue;
    double* xr = x.v.data() + static_cast<size_t>(i) * x.cols;
    const double* yr = y.v.data() + static_cast<size_t>(i) * y.cols;
    for (int j = 0; j < x.cols; ++j) xr[j] += yr[j];
  }
}

}  // namespace

struct DecisionTransformer::Cache {
  int ntok = 0;
  std::vector<uint8_t> tok_valid;
  std::vector<int> rank;  // per slot, -1 when padded
  Matrix x0;
  struct Layer {
    Matrix x_in;
    LnCache ln1;
    Matrix y1, q, k, v;
    std::vector<Matrix> probs;  // per head, ntok x ntok
    Matrix attn_concat;
    Matrix after_attn;
    LnCache ln2;
    Matrix y2, ff_h;
  };
  std::vector<Layer> layers;
  LnCache lnf;
  Matrix x_final, z;
};

DecisionTransformer::DecisionTransformer(DtConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int e = cfg_.embed_dim;
  const int k2 = 2 * cfg_.num_objectives;
  p_.w_prompt = glorot(k2, e, rng);
  p_.b_prompt.assign(e, 0.0);
  p_.w_state = glorot(cfg_.state_dim, e, rng);
  p_.b_state.assign(e, 0.0);
  p_.emb_action = embedding_table(cfg_.num_actions + 1, e, rng);
  p_.pos = embedding_table(3 * cfg_.context_length, e, rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    LayerParams lp;
    lp.ln1_g.assign(e, 1.0);
    lp.ln1_b.assign(e, 0.0);
    lp.wq = glorot(e, e, rng);
    lp.bq.assign(e, 0.0);
    lp.wk = glorot(e, e, rng);
    lp.bk.assign(e, 0.0);
    lp.wv = glorot(e, e, rng);
    lp.bv.assign(e, 0.0);
    lp.wo = glorot(e, e, rng);
    lp.bo.assign(e, 0.0);
    lp.ln2_g.assign(e, 1.0);
    lp.ln2_b.assign(e, 0.0);
    lp.w_ff1 = glorot(e, 4 * e, rng);
    lp.b_ff1.assign(4 * e, 0.0);
    lp.w_ff2 = glorot(4 * e, e, rng);
    lp.b_ff2.assign(e, 0.0);
    p_.layers.push_back(std::move(lp));
  }
  p_.lnf_g.assign(e, 1.0);
  p_.lnf_b.assign(e, 0.0);
  p_.w_head = glorot(e, cfg_.num_actions, rng);
  p_.b_head.assign(cfg_.num_actions, 0.0);
}

Matrix DecisionTransformer::forward_window(const DtWindow& w, Cache* cache) const {
  const int L = w.length;
  const int e = cfg_.embed_dim;
  const int ntok = 3 * L;
  const int k = cfg_.num_objectives;

  std::vector<uint8_t> tok_valid(ntok, 0);
  std::vector<int> rank(L, -1);
  int first_valid = -1;
  for (int s = 0; s < L; ++s) {
    if (w.step_valid[s] && first_valid < 0) first_valid = s;
    if (w.step_valid[s]) {
      rank[s] = s - first_valid;
      tok_valid[3 * s] = 1;
      tok_valid[3 * s + 1] = 1;
      tok_valid[3 * s + 2] = w.action_valid[s] ? 1 : 0;
    }
  }

  Matrix x(ntok, e);
  std::vector<double> prompt_in(2 * k);
  for (int s = 0; s < L; ++s) {
    if (!w.step_valid[s]) continue;
    const int r = rank[s];
    for (int j = 0; j < k; ++j) {
      prompt_in[j] = w.rtg[s][j];
      prompt_in[k + j] = w.pref[s][j];
    }
    {
      auto xr = x.row(3 * s);
      for (int c = 0; c < e; ++c) xr[c] = p_.b_prompt[c] + p_.pos.at(3 * r, c);
      for (int f = 0; f < 2 * k; ++f) {
        const double a = prompt_in[f];
        if (a == 0.0) continue;
        for (int c = 0; c < e; ++c) xr[c] += a * p_.w_prompt.at(f, c);
      }
    }
    {
      auto xr = x.row(3 * s + 1);
      auto st = w.states.row(s);
      for (int c = 0; c < e; ++c) xr[c] = p_.b_state[c] + p_.pos.at(3 * r + 1, c);
      for (int f = 0; f < cfg_.state_dim; ++f) {
        const double a = st[f];
        if (a == 0.0) continue;
        for (int c = 0; c < e; ++c) xr[c] += a * p_.w_state.at(f, c);
      }
    }
    if (tok_valid[3 * s + 2]) {
      auto xr = x.row(3 * s + 2);
      const int a = w.actions[s];
      for (int c = 0; c < e; ++c) xr[c] = p_.emb_action.at(a, c) + p_.pos.at(3 * r + 2, c);
    }
  }

  if (cache) {
    cache->ntok = ntok;
    cache->tok_valid = tok_valid;
    cache->rank = rank;
    cache->x0 = x;
    cache->layers.clear();
    cache->layers.resize(cfg_.num_layers);
  }

  const int heads = cfg_.num_heads;
  const int dh = e / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < cfg_.num_layers; ++l) {
    const LayerParams& lp = p_.layers[l];
    Cache::Layer* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    LnCache ln1_local;
    Matrix y1 = ln_forward(x, lp.ln1_g, lp.ln1_b, tok_valid, lc ? &lc->ln1 : &ln1_local);
    Matrix q = affine_rows(y1, lp.wq, lp.bq, tok_valid);
    Matrix kk = affine_rows(y1, lp.wk, lp.bk, tok_valid);
    Matrix v = affine_rows(y1, lp.wv, lp.bv, tok_valid);

    Matrix attn(ntok, e);
    std::vector<Matrix> probs;
    if (lc) probs.assign(heads, Matrix(ntok, ntok));
    std::vector<double> scores(ntok);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < ntok; ++i) {
        if (!tok_valid[i]) continue;
        // Causal + padding mask by construction: only valid keys j <= i
        // ever enter the sums.
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) {
          if (!tok_valid[j]) continue;
          double s = 0.0;
          const double* qi = q.v.data() + static_cast<size_t>(i) * e + off;
          const double* kj = kk.v.data() + static_cast<size_t>(j) * e + off;
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= scale;
          scores[j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          if (!tok_valid[j]) continue;
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        double* arow = attn.v.data() + static_cast<size_t>(i) * e + off;
        for (int j = 0; j <= i; ++j) {
          if (!tok_valid[j]) continue;
          const double p = scores[j] / z;
          if (lc) probs[h].at(i, j) = p;
          const double* vj = v.v.data() + static_cast<size_t>(j) * e + off;
          for (int c = 0; c < dh; ++c) arow[c] += p * vj[c];
        }
      }
    }

    Matrix o = affine_rows(attn, lp.wo, lp.bo, tok_valid);
    add_rows(x, o, tok_valid);
    if (lc) {
      lc->y1 = std::move(y1);
      lc->q = std::move(q);
      lc->k = std::move(kk);
      lc->v = std::move(v);
      lc->probs = std::move(probs);
      lc->attn_concat = std::move(attn);
      lc->after_attn = x;
    }

    LnCache ln2_local;
    Matrix y2 = ln_forward(x, lp.ln2_g, lp.ln2_b, tok_valid, lc ? &lc->ln2 : &ln2_local);
    Matrix ff = affine_rows(y2, lp.w_ff1, lp.b_ff1, tok_valid);
    for (double& t : ff.v) t = t > 0.0 ? t : 0.0;
    Matrix f2 = affine_rows(ff, lp.w_ff2, lp.b_ff2, tok_valid);
    add_rows(x, f2, tok_valid);
    if (lc) {
      lc->y2 = std::move(y2);
      lc->ff_h = std::move(ff);
    }
  }

  if (cache) cache->x_final = x;
  LnCache lnf_local;
  Matrix z = ln_forward(x, p_.lnf_g, p_.lnf_b, tok_valid, cache ? &cache->lnf : &lnf_local);
  if (cache) cache->z = z;

  Matrix logits(L, cfg_.num_actions);
  for (int s = 0; s < L; ++s) {
    if (!w.step_valid[s]) continue;
    auto zr = z.row(3 * s + 1);
    auto lrow = logits.row(s);
    for (int a = 0; a < cfg_.num_actions; ++a) {
      double acc = p_.b_head[a];
      for (int c = 0; c < e; ++c) acc += zr[c] * p_.w_head.at(c, a);
      lrow[a] = acc;
    }
  }
  return logits;
}

DecisionTransformer::Params DecisionTransformer::zeros_like() const {
  Params g;
  const int e = cfg_.embed_dim;
  g.w_prompt = Matrix(p_.w_prompt.rows, p_.w_prompt.cols);
  g.b_prompt.assign(e, 0.0);
  g.w_state = Matrix(p_.w_state.rows, p_.w_state.cols);
  g.b_state.assign(e, 0.0);
  g.emb_action = Matrix(p_.emb_action.rows, p_.emb_action.cols);
  g.pos = Matrix(p_.pos.rows, p_.pos.cols);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    LayerParams lp;
    lp.ln1_g.assign(e, 0.0);
    lp.ln1_b.assign(e, 0.0);
    lp.wq = Matrix(e, e);
    lp.bq.assign(e, 0.0);
    lp.wk = Matrix(e, e);
    lp.bk.assign(e, 0.0);
    lp.wv = Matrix(e, e);
    lp.bv.assign(e, 0.0);
    lp.wo = Matrix(e, e);
    lp.bo.assign(e, 0.0);
    lp.ln2_g.assign(e, 0.0);
    lp.ln2_b.assign(e, 0.0);
    lp.w_ff1 = Matrix(e, 4 * e);
    lp.b_ff1.assign(4 * e, 0.0);
    lp.w_ff2 = Matrix(4 * e, e);
    lp.b_ff2.assign(e, 0.0);
    g.layers.push_back(std::move(lp));
  }
  g.lnf_g.assign(e, 0.0);
  g.lnf_b.assign(e, 0.0);
  g.w_head = Matrix(e, cfg_.num_actions);
  g.b_head.assign(cfg_.num_actions, 0.0);
  return g;
}

void DecisionTransformer::backward_window(const DtWindow& w, const Cache& cache,
                                          const Matrix& dlogits, Params& g) const {
  const int L = w.length;
  const int e = cfg_.embed_dim;
  const int ntok = cache.ntok;
  const auto& tok_valid = cache.tok_valid;
  const int heads = cfg_.num_heads;
  const int dh = e / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Head.
  Matrix dz(ntok, e);
  for (int s = 0; s < L; ++s) {
    if (!w.step_valid[s]) continue;
    auto dl = dlogits.row(s);
    auto zr = cache.z.row(3 * s + 1);
    auto dzr = dz.row(3 * s + 1);
    for (int a = 0; a < cfg_.num_actions; ++a) {
      const double d = dl[a];
      if (d == 0.0) continue;
      g.b_head[a] += d;
      for (int c = 0; c < e; ++c) {
        g.w_head.at(c, a) += zr[c] * d;
        dzr[c] += d * p_.w_head.at(c, a);
      }
    }
  }

  Matrix dx = ln_backward(dz, cache.lnf, p_.lnf_g, tok_valid, g.lnf_g, g.lnf_b);

  for (int l = cfg_.num_layers - 1; l >= 0; --l) {
    const LayerParams& lp = p_.layers[l];
    LayerParams& gl = g.layers[l];
    const Cache::Layer& lc = cache.layers[l];

    // Feed-forward block: x_out = after_attn + W2 relu(W1 LN2(after_attn) + b1) + b2.
    Matrix df = dx;  // gradient into the ff output (residual handled below)
    Matrix dh_ff(ntok, 4 * e);
    {
      // through w_ff2
      for (int i = 0; i < ntok; ++i) {
        if (!tok_valid[i]) continue;
        const double* dr = df.v.data() + static_cast<size_t>(i) * e;
        const double* hr = lc.ff_h.v.data() + static_cast<size_t>(i) * (4 * e);
        for (int c = 0; c < e; ++c) gl.b_ff2[c] += dr[c];
        double* dhr = dh_ff.v.data() + static_cast<size_t>(i) * (4 * e);
        for (int kk2 = 0; kk2 < 4 * e; ++kk2) {
          const double hval = hr[kk2];
          const double* wrow = lp.w_ff2.v.data() + static_cast<size_t>(kk2) * e;
          double acc = 0.0;
          for (int c = 0; c < e; ++c) acc += dr[c] * wrow[c];
          if (hval != 0.0) {
            double* gw = gl.w_ff2.v.data() + static_cast<size_t>(kk2) * e;
            for (int c = 0; c < e; ++c) gw[c] += hval * dr[c];
          }
          dhr[kk2] = hval > 0.0 ? acc : 0.0;  // relu derivative folded in
        }
      }
    }
    Matrix dy2(ntok, e);
    affine_backward_rows(lc.y2, lp.w_ff1, dh_ff, tok_valid, gl.w_ff1, gl.b_ff1, dy2);
    Matrix d_after_attn = ln_backward(dy2, lc.ln2, lp.ln2_g, tok_valid, gl.ln2_g, gl.ln2_b);
    add_rows(d_after_attn, dx, tok_valid);  // residual path

    // Attention block: after_attn = x_in + Wo attn + bo.
    Matrix d_attn(ntok, e);
    affine_backward_rows(lc.attn_concat, lp.wo, d_after_attn, tok_valid, gl.wo, gl.bo, d_attn);

    Matrix dq(ntok, e), dk(ntok, e), dv(ntok, e);
    std::vector<double> dp(ntok);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      const Matrix& probs = lc.probs[h];
      for (int i = 0; i < ntok; ++i) {
        if (!tok_valid[i]) continue;
        const double* do_i = d_attn.v.data() + static_cast<size_t>(i) * e + off;
        double sum_pdp = 0.0;
        for (int j = 0; j <= i; ++j) {
          if (!tok_valid[j]) continue;
          const double p = probs.at(i, j);
          const double* vj = lc.v.v.data() + static_cast<size_t>(j) * e + off;
          double dpij = 0.0;
          for (int c = 0; c < dh; ++c) dpij += do_i[c] * vj[c];
          dp[j] = dpij;
          sum_pdp += p * dpij;
          double* dvj = dv.v.data() + static_cast<size_t>(j) * e + off;
          for (int c = 0; c < dh; ++c) dvj[c] += p * do_i[c];
        }
        const double* qi = lc.q.v.data() + static_cast<size_t>(i) * e + off;
        double* dqi = dq.v.data() + static_cast<size_t>(i) * e + off;
        for (int j = 0; j <= i; ++j) {
          if (!tok_valid[j]) continue;
          const double p = probs.at(i, j);
          const double ds = p * (dp[j] - sum_pdp) * scale;
          if (ds == 0.0) continue;
          const double* kj = lc.k.v.data() + static_cast<size_t>(j) * e + off;
          double* dkj = dk.v.data() + static_cast<size_t>(j) * e + off;
          for (int c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }

    Matrix dy1(ntok, e);
    affine_backward_rows(lc.y1, lp.wq, dq, tok_valid, gl.wq, gl.bq, dy1);
    affine_backward_rows(lc.y1, lp.wk, dk, tok_valid, gl.wk, gl.bk, dy1);
    affine_backward_rows(lc.y1, lp.wv, dv, tok_valid, gl.wv, gl.bv, dy1);
    Matrix dx_in = ln_backward(dy1, lc.ln1, lp.ln1_g, tok_valid, gl.ln1_g, gl.ln1_b);
    add_rows(dx_in, d_after_attn, tok_valid);  // residual path
    dx = std::move(dx_in);
  }

  // Embeddings.
  const int k = cfg_.num_objectives;
  std::vector<double> prompt_in(2 * k);
  for (int s = 0; s < L; ++s) {
    if (!w.step_valid[s]) continue;
    const int r = cache.rank[s];
    for (int j = 0; j < k; ++j) {
      prompt_in[j] = w.rtg[s][j];
      prompt_in[k + j] = w.pref[s][j];
    }
    {
      auto dr = dx.row(3 * s);
      for (int c = 0; c < e; ++c) {
        g.b_prompt[c] += dr[c];
        g.pos.at(3 * r, c) += dr[c];
      }
      for (int f = 0; f < 2 * k; ++f) {
        const double a = prompt_in[f];
        if (a == 0.0) continue;
        for (int c = 0; c < e; ++c) g.w_prompt.at(f, c) += a * dr[c];
      }
    }
    {
      auto dr = dx.row(3 * s + 1);
      auto st = w.states.row(s);
      for (int c = 0; c < e; ++c) {
        g.b_state[c] += dr[c];
        g.pos.at(3 * r + 1, c) += dr[c];
      }
      for (int f = 0; f < cfg_.state_dim; ++f) {
        const double a = st[f];
        if (a == 0.0) continue;
        for (int c = 0; c < e; ++c) g.w_state.at(f, c) += a * dr[c];
      }
    }
    if (tok_valid[3 * s + 2]) {
      auto dr = dx.row(3 * s + 2);
      const int a = w.actions[s];
      for (int c = 0; c < e; ++c) {
        g.emb_action.at(a, c) += dr[c];
        g.pos.at(3 * r + 2, c) += dr[c];
      }
    }
  }
}

namespace {

void collect_views(DecisionTransformer::Params& p, std::vector<std::span<double>>& out) {
  out.emplace_back(p.w_prompt.v);
  out.emplace_back(p.b_prompt);
  out.emplace_back(p.w_state.v);
  out.emplace_back(p.b_state);
  out.emplace_back(p.emb_action.v);
  out.emplace_back(p.pos.v);
  for (auto& l : p.layers) {
    out.emplace_back(l.ln1_g);
    out.emplace_back(l.ln1_b);
    out.emplace_back(l.wq.v);
    out.emplace_back(l.bq);
    out.emplace_back(l.wk.v);
    out.emplace_back(l.bk);
    out.emplace_back(l.wv.v);
    out.emplace_back(l.bv);
    out.emplace_back(l.wo.v);
    out.emplace_back(l.bo);
    out.emplace_back(l.ln2_g);
    out.emplace_back(l.ln2_b);
    out.emplace_back(l.w_ff1.v);
    out.emplace_back(l.b_ff1);
    out.emplace_back(l.w_ff2.v);
    out.emplace_back(l.b_ff2);
  }
  out.emplace_back(p.lnf_g);
  out.emplace_back(p.lnf_b);
  out.emplace_back(p.w_head.v);
  out.emplace_back(p.b_head);
}

}  // namespace

std::vector<std::span<double>> DecisionTransformer::param_views() {
  std::vector<std::span<double>> out;
  collect_views(p_, out);
  return out;
}

std::vector<std::span<const double>> DecisionTransformer::grad_views(const Params& g) const {
  std::vector<std::span<double>> mut;
  collect_views(const_cast<Params&>(g), mut);
  return {mut.begin(), mut.end()};
}

std::pair<double, DecisionTransformer::Params> DecisionTransformer::loss_and_grads(
    const std::vector<const DtWindow*>& batch) const {
  Params grads = zeros_like();
  int n_valid = 0;
  for (const DtWindow* w : batch) {
    for (int s = 0; s < w->length; ++s) {
      if (w->step_valid[s] && w->actions[s] >= 0) ++n_valid;
    }
  }
  if (n_valid == 0) return {0.0, std::move(grads)};

  double total_loss = 0.0;
  for (const DtWindow* w : batch) {
    Cache cache;
    Matrix logits = forward_window(*w, &cache);
    Matrix dlogits(w->length, cfg_.num_actions);
    bool any = false;
    for (int s = 0; s < w->length; ++s) {
      if (!w->step_valid[s] || w->actions[s] < 0) continue;
      auto [loss, grad] = softmax_cross_entropy(logits.row(s), w->actions[s]);
      total_loss += loss;
      for (int a = 0; a < cfg_.num_actions; ++a) dlogits.row(s)[a] = grad[a] / n_valid;
      any = true;
    }
    if (any) backward_window(*w, cache, dlogits, grads);
  }
  return {total_loss / n_valid, std::move(grads)};
}

double DecisionTransformer::train_step(const std::vector<const DtWindow*>& batch,
                                       AdamState& adam) {
  auto [loss, grads] = loss_and_grads(batch);
  auto params = param_views();
  auto gviews = grad_views(grads);
  adam.step(params, gviews);
  return loss;
}

double DecisionTransformer::eval_loss(const std::vector<const DtWindow*>& batch) const {
  double total_loss = 0.0;
  int n_valid = 0;
  for (const DtWindow* w : batch) {
    Matrix logits = forward_window(*w);
    for (int s = 0; s < w->length; ++s) {
      if (!w->step_valid[s] || w->actions[s] < 0) continue;
      auto [loss, grad] = softmax_cross_entropy(logits.row(s), w->actions[s]);
      (void)grad;
      total_loss += loss;
      ++n_valid;
    }
  }
  return n_valid > 0 ? total_loss / n_valid : 0.0;
}

double DecisionTransformer::action_accuracy(const std::vector<DtWindow>& windows) const {
  int correct = 0;
  int total = 0;
  for (const DtWindow& w : windows) {
    Matrix logits = forward_window(w);
    for (int s = 0; s < w.length; ++s) {
      if (!w.step_valid[s] || w.actions[s] < 0) continue;
      if (argmax_tie_low(logits.row(s)) == w.actions[s]) ++correct;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

std::vector<DtWindow> build_sequences(const Dataset& d, const DtConfig& cfg) {
  const int L = cfg.context_length;
  const int dim = d.num_features();
  std::vector<DtWindow> windows;
  for (const Trajectory& traj : d.trajectories) {
    const int T = traj.length();
    // Undiscounted suffix sums: g_t = r_t + g_{t+1}.
    std::vector<std::array<double, 2>> g(T + 1, {0.0, 0.0});
    for (int t = T - 1; t >= 0; --t) {
      g[t][0] = traj.transitions[t].reward.mortality + g[t + 1][0];
      g[t][1] = traj.transitions[t].reward.los + g[t + 1][1];
    }
    const double total = g[0][0] + g[0][1];
    std::array<double, 2> pref{0.5, 0.5};
    if (total > 0.0) pref = {g[0][0] / total, g[0][1] / total};

    for (int start = 0; start < T; start += L) {
      const int len = std::min(L, T - start);
      DtWindow w;
      w.length = L;
      w.episode_id = traj.id;
      w.first_step = start + 1;
      w.rtg.assign(L, {0.0, 0.0});
      w.pref.assign(L, {0.0, 0.0});
      w.states = Matrix(L, dim);
      w.actions.assign(L, -1);
      w.step_valid.assign(L, 0);
      w.action_valid.assign(L, 0);
      const int pad = L - len;  // left padding
      for (int i = 0; i < len; ++i) {
        const int slot = pad + i;
        const int t = start + i;
        w.rtg[slot] = g[t];
        w.pref[slot] = pref;
        std::copy(traj.transitions[t].state.begin(), traj.transitions[t].state.end(),
                  w.states.row(slot).begin());
        w.actions[slot] = traj.transitions[t].action;
        w.step_valid[slot] = 1;
        w.action_valid[slot] = 1;
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

DtTrainResult train_dt(const Dataset& train, const DtConfig& cfg_in, int epochs) {
  validate(train);
  DtConfig cfg = cfg_in;
  cfg.state_dim = train.num_features();
  cfg.num_actions = train.num_actions;
  Rng rng(cfg.seed);
  DecisionTransformer model(cfg, rng);

  double max_total = 0.0;
  for (const Trajectory& traj : train.trajectories) {
    const VectorReward ret = discounted_return(traj, 1.0);
    max_total = std::max(max_total, ret.mortality + ret.los);
  }
  model.set_max_total_return(max_total);

  std::vector<DtWindow> windows = build_sequences(train, cfg);
  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  DtTrainResult result;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const DtWindow*> batch;
      for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&windows[order[i]]);
      }
      loss_sum += model.train_step(batch, adam);
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / std::max(1, batches));
  }
  result.model = std::move(model);
  return result;
}

// ---- checkpointing ----

void DecisionTransformer::append_params(ParamFile& file) const {
  file.meta["dt.context_length"] = std::to_string(cfg_.context_length);
  file.meta["dt.embed_dim"] = std::to_string(cfg_.embed_dim);
  file.meta["dt.num_layers"] = std::to_string(cfg_.num_layers);
  file.meta["dt.num_heads"] = std::to_string(cfg_.num_heads);
  file.meta["dt.state_dim"] = std::to_string(cfg_.state_dim);
  file.meta["dt.num_actions"] = std::to_string(cfg_.num_actions);
  file.meta["dt.num_objectives"] = std::to_string(cfg_.num_objectives);
  {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", max_total_return_);
    file.meta["dt.max_total_return"] = buf;
  }
  file.add_matrix("dt.w_prompt", p_.w_prompt);
  file.add_vector("dt.b_prompt", p_.b_prompt);
  file.add_matrix("dt.w_state", p_.w_state);
  file.add_vector("dt.b_state", p_.b_state);
  file.add_matrix("dt.emb_action", p_.emb_action);
  file.add_matrix("dt.pos", p_.pos);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const auto& lp = p_.layers[l];
    const std::string pre = "dt.layer" + std::to_string(l) + ".";
    file.add_vector(pre + "ln1_g", lp.ln1_g);
    file.add_vector(pre + "ln1_b", lp.ln1_b);
    file.add_matrix(pre + "wq", lp.wq);
    file.add_vector(pre + "bq", lp.bq);
    file.add_matrix(pre + "wk", lp.wk);
    file.add_vector(pre + "bk", lp.bk);
    file.add_matrix(pre + "wv", lp.wv);
    file.add_vector(pre + "bv", lp.bv);
    file.add_matrix(pre + "wo", lp.wo);
    file.add_vector(pre + "bo", lp.bo);
    file.add_vector(pre + "ln2_g", lp.ln2_g);
    file.add_vector(pre + "ln2_b", lp.ln2_b);
    file.add_matrix(pre + "w_ff1", lp.w_ff1);
    file.add_vector(pre + "b_ff1", lp.b_ff1);
    file.add_matrix(pre + "w_ff2", lp.w_ff2);
    file.add_vector(pre + "b_ff2", lp.b_ff2);
  }
  file.add_vector("dt.lnf_g", p_.lnf_g);
  file.add_vector("dt.lnf_b", p_.lnf_b);
  file.add_matrix("dt.w_head", p_.w_head);
  file.add_vector("dt.b_head", p_.b_head);
}

DecisionTransformer DecisionTransformer::from_params(const ParamFile& file) {
  DecisionTransformer model;
  DtConfig cfg;
  cfg.context_length = std::stoi(file.meta_at("dt.context_length"));
  cfg.embed_dim = std::stoi(file.meta_at("dt.embed_dim"));
  cfg.num_layers = std::stoi(file.meta_at("dt.num_layers"));
  cfg.num_heads = std::stoi(file.meta_at("dt.num_heads"));
  cfg.state_dim = std::stoi(file.meta_at("dt.state_dim"));
  cfg.num_actions = std::stoi(file.meta_at("dt.num_actions"));
  cfg.num_objectives = std::stoi(file.meta_at("dt.num_objectives"));
  model.cfg_ = cfg;
  model.max_total_return_ = std::stod(file.meta_at("dt.max_total_return"));
  auto& p = model.p_;
  p.w_prompt = file.get_matrix("dt.w_prompt");
  p.b_prompt = file.get_vector("dt.b_prompt");
  p.w_state = file.get_matrix("dt.w_state");
  p.b_state = file.get_vector("dt.b_state");
  p.emb_action = file.get_matrix("dt.emb_action");
  p.pos = file.get_matrix("dt.pos");
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParams lp;
    const std::string pre = "dt.layer" + std::to_string(l) + ".";
    lp.ln1_g = file.get_vector(pre + "ln1_g");
    lp.ln1_b = file.get_vector(pre + "ln1_b");
    lp.wq = file.get_matrix(pre + "wq");
    lp.bq = file.get_vector(pre + "bq");
    lp.wk = file.get_matrix(pre + "wk");
    lp.bk = file.get_vector(pre + "bk");
    lp.wv = file.get_matrix(pre + "wv");
    lp.bv = file.get_vector(pre + "bv");
    lp.wo = file.get_matrix(pre + "wo");
    lp.bo = file.get_vector(pre + "bo");
    lp.ln2_g = file.get_vector(pre + "ln2_g");
    lp.ln2_b = file.get_vector(pre + "ln2_b");
    lp.w_ff1 = file.get_matrix(pre + "w_ff1");
    lp.b_ff1 = file.get_vector(pre + "b_ff1");
    lp.w_ff2 = file.get_matrix(pre + "w_ff2");
    lp.b_ff2 = file.get_vector(pre + "b_ff2");
    p.layers.push_back(std::move(lp));
  }
  p.lnf_g = file.get_vector("dt.lnf_g");
  p.lnf_b = file.get_vector("dt.lnf_b");
  p.w_head = file.get_matrix("dt.w_head");
  p.b_head = file.get_vector("dt.b_head");
  return model;
}

// ---- policy ----

namespace {

struct ContextStep {
  std::array<double, 2> rtg;
  std::vector<double> state;
  int action = -1;
};

DtWindow make_context_window(std::span<const ContextStep> steps,
                             const std::array<double, 2>& pref, int L, int dim) {
  DtWindow w;
  w.length = L;
  w.rtg.assign(L, {0.0, 0.0});
  w.pref.assign(L, {0.0, 0.0});
  w.states = Matrix(L, dim);
  w.actions.assign(L, -1);
  w.step_valid.assign(L, 0);
  w.action_valid.assign(L, 0);
  const int len = std::min<int>(L, static_cast<int>(steps.size()));
  const int from = static_cast<int>(steps.size()) - len;
  const int pad = L - len;
  for (int i = 0; i < len; ++i) {
    const ContextStep& cs = steps[from + i];
    const int slot = pad + i;
    w.rtg[slot] = cs.rtg;
    w.pref[slot] = pref;
    std::copy(cs.state.begin(), cs.state.end(), w.states.row(slot).begin());
    w.step_valid[slot] = 1;
    if (cs.action >= 0) {
      w.actions[slot] = cs.action;
      w.action_valid[slot] = 1;
    }
  }
  return w;
}

std::vector<double> blended_probs(std::span<const double> logits, double epsilon) {
  std::vector<double> p = softmax(logits);
  const double n = static_cast<double>(p.size());
  for (double& x : p) x = (1.0 - epsilon) * x + epsilon / n;
  return p;
}

class DtSession : public PolicySession {
 public:
  DtSession(const DecisionTransformer& model, std::array<double, 2> pref,
            std::array<double, 2> initial_rtg, double epsilon)
      : model_(model), pref_(pref), next_rtg_(initial_rtg), epsilon_(epsilon) {}

  std::vector<double> action_probs(std::span<const double> state) override {
    if (!steps_.empty() && steps_.back().action < 0) {
      steps_.pop_back();  // re-query for the same step
    }
    ContextStep cs;
    cs.rtg = next_rtg_;
    cs.state.assign(state.begin(), state.end());
    steps_.push_back(std::move(cs));
    const DtConfig& cfg = model_.config();
    DtWindow w = make_context_window(steps_, pref_, cfg.context_length, cfg.state_dim);
    Matrix logits = model_.forward_window(w);
    // Last valid slot is the current step.
    return blended_probs(logits.row(cfg.context_length - 1), epsilon_);
  }

  void record(int action, const VectorReward& reward) override {
    if (steps_.empty() || steps_.back().action >= 0) {
      throw UsageError("DtSession::record called without a pending step");
    }
    steps_.back().action = action;
    next_rtg_ = {steps_.back().rtg[0] - reward.mortality, steps_.back().rtg[1] - reward.los};
  }

 private:
  const DecisionTransformer& model_;
  std::array<double, 2> pref_;
  std::array<double, 2> next_rtg_;
  double epsilon_;
  std::vector<ContextStep> steps_;
};

}  // namespace

DtPolicy::DtPolicy(std::shared_ptr<const DecisionTransformer> model, PreferenceVector w,
                   double target_rtg_scale, double epsilon)
    : model_(std::move(model)), w_(w), target_rtg_scale_(target_rtg_scale), epsilon_(epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("DtPolicy: epsilon must be in [0, 1]");
}

int DtPolicy::num_actions() const { return model_->config().num_actions; }

std::array<double, 2> DtPolicy::initial_rtg() const {
  const double m = target_rtg_scale_ * model_->max_total_return();
  return {m * w_.w_mortality(), m * w_.w_los()};
}

std::vector<double> DtPolicy::action_probs(std::span<const double> state) const {
  const DtConfig& cfg = model_->config();
  std::vector<ContextStep> steps(1);
  steps[0].rtg = initial_rtg();
  steps[0].state.assign(state.begin(), state.end());
  DtWindow w = make_context_window(steps, {w_.w_mortality(), w_.w_los()}, cfg.context_length,
                                   cfg.state_dim);
  Matrix logits = model_->forward_window(w);
  return blended_probs(logits.row(cfg.context_length - 1), epsilon_);
}

std::vector<std::vector<double>> DtPolicy::episode_action_probs(const Trajectory& traj) const {
  const DtConfig& cfg = model_->config();
  const int L = cfg.context_length;
  const int T = traj.length();
  // Teacher-forced context along the logged episode: the return prompt
  // starts at the policy's target and is decremented by logged rewards.
  std::vector<ContextStep> steps(T);
  std::array<double, 2> rtg = initial_rtg();
  for (int t = 0; t < T; ++t) {
    steps[t].rtg = rtg;
    steps[t].state = traj.transitions[t].state;
    steps[t].action = traj.transitions[t].action;
    rtg[0] -= traj.transitions[t].reward.mortality;
    rtg[1] -= traj.transitions[t].reward.los;
  }
  const std::array<double, 2> pref{w_.w_mortality(), w_.w_los()};

  std::vector<std::vector<double>> out(T);
  // One forward covers the first min(T, L) steps: with causal masking the
  // logits at step t only see the logged prefix up to t.
  {
    const int len = std::min(T, L);
    DtWindow w = make_context_window(std::span(steps.data(), len), pref, L, cfg.state_dim);
    Matrix logits = model_->forward_window(w);
    for (int t = 0; t < len; ++t) {
      out[t] = blended_probs(logits.row(L - len + t), epsilon_);
    }
  }
  for (int t = L; t < T; ++t) {
    DtWindow w = make_context_window(std::span(steps.data() + (t - L + 1), L), pref, L,
                                     cfg.state_dim);
    Matrix logits = model_->forward_window(w);
    out[t] = blended_probs(logits.row(L - 1), epsilon_);
  }
  return out;
}

std::unique_ptr<PolicySession> DtPolicy::session() const {
  return std::make_unique<DtSession>(*model_, std::array<double, 2>{w_.w_mortality(), w_.w_los()},
                                     initial_rtg(), epsilon_);
}

std::unique_ptr<Policy> dt_policy(std::shared_ptr<const DecisionTransformer> model,
                                  const PreferenceVector& w, double target_rtg_scale,
                                  double epsilon) {
  return std::make_unique<DtPolicy>(std::move(model), w, target_rtg_scale, epsilon);
}

}  // namespace morlbench
