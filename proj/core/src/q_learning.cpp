#include "morlbench/q_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "morlbench/policy.hpp"

namespace morlbench {

std::string conditioning_name(Conditioning c) {
  switch (c) {
    case Conditioning::kNone: return "none";
    case Conditioning::kConcat: return "concat";
    case Conditioning::kPreferenceAttention: return "preference_attention";
  }
  throw UsageError("conditioning_name: bad enum");
}

Conditioning conditioning_from_name(const std::string& name) {
  if (name == "none") return Conditioning::kNone;
  if (name == "concat") return Conditioning::kConcat;
  if (name == "preference_attention") return Conditioning::kPreferenceAttention;
  throw ValidationError("unknown conditioning '" + name + "'");
}

std::string sampler_mode_name(PreferenceSampler::Mode m) {
  switch (m) {
    case PreferenceSampler::Mode::kUniform: return "uniform";
    case PreferenceSampler::Mode::kGrid: return "grid";
    case PreferenceSampler::Mode::kFixed: return "fixed";
  }
  throw UsageError("sampler_mode_name: bad enum");
}

PreferenceSampler PreferenceSampler::fixed_at(std::vector<double> w) {
  PreferenceSampler s;
  s.mode = Mode::kFixed;
  s.num_objectives = static_cast<int>(w.size());
  s.fixed = std::move(w);
  return s;
}

std::vector<std::vector<double>> PreferenceSampler::grid_points() const {
  if (num_objectives != 2) {
    throw UsageError("PreferenceSampler::grid_points: grid defined for 2 objectives");
  }
  std::vector<std::vector<double>> pts;
  const int steps = static_cast<int>(std::llround(1.0 / grid_step));
  for (int i = 0; i <= steps; ++i) {
    const double w0 = std::min(1.0, i * grid_step);
    pts.push_back({w0, 1.0 - w0});
  }
  return pts;
}

std::vector<double> PreferenceSampler::next(Rng& rng, int64_t step) {
  if (mode == Mode::kFixed) return fixed;
  if (num_objectives == 1) return {1.0};
  if (mode == Mode::kGrid || (mode == Mode::kUniform && step % 10 == 0)) {
    auto pts = grid_points();
    auto w = pts[grid_cursor_ % pts.size()];
    ++grid_cursor_;
    return w;
  }
  // Uniform on the simplex via normalized exponentials.
  std::vector<double> w(num_objectives);
  double total = 0.0;
  for (double& x : w) {
    double u = rng.uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    x = -std::log(u);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

VectorQNet::VectorQNet(Conditioning cond, int state_dim, int num_actions, int num_objectives,
                       const std::vector<int>& hidden, Activation act, Rng& rng)
    : cond_(cond), state_dim_(state_dim), num_actions_(num_actions),
      num_objectives_(num_objectives) {
  if (hidden.empty()) throw UsageError("VectorQNet: need at least one hidden layer");
  std::vector<int> dims;
  dims.push_back(cond == Conditioning::kConcat ? state_dim + num_objectives : state_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(num_actions * num_objectives);
  backbone_ = Mlp(dims, act, rng);
  if (cond == Conditioning::kPreferenceAttention) {
    const int h1 = hidden[0];
    const double bound = std::sqrt(6.0 / (num_objectives + h1));
    gate_w_ = Matrix(num_objectives, h1);
    for (double& x : gate_w_.v) x = rng.uniform(-bound, bound);
    gate_b_.assign(h1, 0.0);
  }
}

namespace {

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
    std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + a.cols);
  }
  return out;
}

void apply_activation(Matrix& z, Activation act) {
  if (act == Activation::kRelu) {
    for (double& t : z.v) t = t > 0.0 ? t : 0.0;
  } else {
    for (double& t : z.v) t = std::tanh(t);
  }
}

}  // namespace

Matrix VectorQNet::forward(const Matrix& states, const Matrix& prefs, Cache* cache) const {
  if (cond_ == Conditioning::kNone) {
    return backbone_.forward(states, cache ? &cache->mlp : nullptr);
  }
  if (cond_ == Conditioning::kConcat) {
    return backbone_.forward(concat_cols(states, prefs), cache ? &cache->mlp : nullptr);
  }
  // Preference-attention path: gate the first hidden activation.
  const int layers = backbone_.num_layers();
  Matrix z = matmul(states, backbone_.weight(0));
  for (int i = 0; i < z.rows; ++i) {
    double* zr = z.v.data() + static_cast<size_t>(i) * z.cols;
    for (int j = 0; j < z.cols; ++j) zr[j] += backbone_.bias(0)[j];
  }
  apply_activation(z, backbone_.activation());
  Matrix h_raw = z;

  Matrix gp = matmul(prefs, gate_w_);
  for (int i = 0; i < gp.rows; ++i) {
    double* gr = gp.v.data() + static_cast<size_t>(i) * gp.cols;
    for (int j = 0; j < gp.cols; ++j) gr[j] += gate_b_[j];
  }
  Matrix gains(gp.rows, gp.cols);
  for (size_t i = 0; i < gp.v.size(); ++i) gains.v[i] = 2.0 / (1.0 + std::exp(-gp.v[i]));

  Matrix cur(h_raw.rows, h_raw.cols);
  for (size_t i = 0; i < cur.v.size(); ++i) cur.v[i] = h_raw.v[i] * gains.v[i];

  if (cache) {
    cache->prefs = prefs;
    cache->gains = gains;
    cache->h_raw = h_raw;
    cache->acts.clear();
    cache->acts.push_back(states);
    cache->acts.push_back(cur);
  }
  for (int l = 1; l < layers; ++l) {
    Matrix nz = matmul(cur, backbone_.weight(l));
    for (int i = 0; i < nz.rows; ++i) {
      double* zr = nz.v.data() + static_cast<size_t>(i) * nz.cols;
      for (int j = 0; j < nz.cols; ++j) zr[j] += backbone_.bias(l)[j];
    }
    if (l + 1 < layers) apply_activation(nz, backbone_.activation());
    cur = std::move(nz);
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

std::vector<double> VectorQNet::forward_one(std::span<const double> state,
                                            std::span<const double> pref) const {
  Matrix s = Matrix::from_row(state);
  Matrix p = Matrix::from_row(pref);
  return forward(s, p).v;
}

VectorQNet::Grads VectorQNet::zero_grads() const {
  Grads g;
  g.backbone = backbone_.zero_grads();
  if (cond_ == Conditioning::kPreferenceAttention) {
    g.d_gate_w = Matrix(gate_w_.rows, gate_w_.cols);
    g.d_gate_b.assign(gate_b_.size(), 0.0);
  }
  return g;
}

void VectorQNet::backward(const Cache& cache, const Matrix& dout, Grads* grads) const {
  if (cond_ != Conditioning::kPreferenceAttention) {
    MlpGrads g = backbone_.backward(cache.mlp, dout);
    backbone_.accumulate(grads->backbone, g);
    return;
  }
  const int layers = backbone_.num_layers();
  const Activation act = backbone_.activation();
  Matrix delta = dout;
  for (int l = layers - 1; l >= 1; --l) {
    const Matrix& input = cache.acts[l];
    Matrix dw = matmul_tn(input, delta);
    for (size_t i = 0; i < dw.v.size(); ++i) grads->backbone.d_weights[l].v[i] += dw.v[i];
    auto& db = grads->backbone.d_biases[l];
    for (int i = 0; i < delta.rows; ++i) {
      const double* dr = delta.v.data() + static_cast<size_t>(i) * delta.cols;
      for (int j = 0; j < delta.cols; ++j) db[j] += dr[j];
    }
    delta = matmul_nt(delta, backbone_.weight(l));
    // Activation derivative of the layer feeding this one. For l-1 == 0 the
    // stored activation is the gated h'; the raw activation derivative is
    // handled at the gate below, so only apply it for l-1 >= 1.
    if (l - 1 >= 1) {
      const Matrix& a = cache.acts[l];  // post-activation output of layer l-1
      if (act == Activation::kRelu) {
        for (size_t i = 0; i < delta.v.size(); ++i) {
          if (a.v[i] <= 0.0) delta.v[i] = 0.0;
        }
      } else {
        for (size_t i = 0; i < delta.v.size(); ++i) delta.v[i] *= 1.0 - a.v[i] * a.v[i];
      }
    }
  }
  // delta is now d(loss)/d(h_gated).
  const Matrix& gains = cache.gains;
  const Matrix& h_raw = cache.h_raw;
  Matrix d_h(h_raw.rows, h_raw.cols);
  Matrix d_gain(h_raw.rows, h_raw.cols);
  for (size_t i = 0; i < delta.v.size(); ++i) {
    d_h.v[i] = delta.v[i] * gains.v[i];
    d_gain.v[i] = delta.v[i] * h_raw.v[i];
  }
  // Gate: gain = 2*sigmoid(p); d gain/d p = gain * (1 - gain/2).
  Matrix d_gate_pre(d_gain.rows, d_gain.cols);
  for (size_t i = 0; i < d_gain.v.size(); ++i) {
    d_gate_pre.v[i] = d_gain.v[i] * gains.v[i] * (1.0 - 0.5 * gains.v[i]);
  }
  Matrix dwg = matmul_tn(cache.prefs, d_gate_pre);
  for (size_t i = 0; i < dwg.v.size(); ++i) grads->d_gate_w.v[i] += dwg.v[i];
  for (int i = 0; i < d_gate_pre.rows; ++i) {
    const double* dr = d_gate_pre.v.data() + static_cast<size_t>(i) * d_gate_pre.cols;
    for (int j = 0; j < d_gate_pre.cols; ++j) grads->d_gate_b[j] += dr[j];
  }
  // First backbone layer through the raw activation.
  if (act == Activation::kRelu) {
    for (size_t i = 0; i < d_h.v.size(); ++i) {
      if (h_raw.v[i] <= 0.0) d_h.v[i] = 0.0;
    }
  } else {
    for (size_t i = 0; i < d_h.v.size(); ++i) d_h.v[i] *= 1.0 - h_raw.v[i] * h_raw.v[i];
  }
  const Matrix& input = cache.acts[0];
  Matrix dw0 = matmul_tn(input, d_h);
  for (size_t i = 0; i < dw0.v.size(); ++i) grads->backbone.d_weights[0].v[i] += dw0.v[i];
  auto& db0 = grads->backbone.d_biases[0];
  for (int i = 0; i < d_h.rows; ++i) {
    const double* dr = d_h.v.data() + static_cast<size_t>(i) * d_h.cols;
    for (int j = 0; j < d_h.cols; ++j) db0[j] += dr[j];
  }
}

std::vector<std::span<double>> VectorQNet::param_views() {
  auto views = backbone_.param_views();
  if (cond_ == Conditioning::kPreferenceAttention) {
    views.emplace_back(gate_w_.v);
    views.emplace_back(gate_b_);
  }
  return views;
}

std::vector<std::span<const double>> VectorQNet::grad_views(const Grads& g) const {
  auto views = backbone_.grad_views(g.backbone);
  if (cond_ == Conditioning::kPreferenceAttention) {
    views.emplace_back(g.d_gate_w.v);
    views.emplace_back(g.d_gate_b);
  }
  return views;
}

std::vector<double> VectorQNet::gate_gains(std::span<const double> pref) const {
  if (cond_ != Conditioning::kPreferenceAttention) {
    throw UsageError("gate_gains: network has no preference gate");
  }
  std::vector<double> gains(gate_b_.size());
  for (int j = 0; j < static_cast<int>(gains.size()); ++j) {
    double p = gate_b_[j];
    for (int k = 0; k < gate_w_.rows; ++k) p += pref[k] * gate_w_.at(k, j);
    gains[j] = 2.0 / (1.0 + std::exp(-p));
  }
  return gains;
}

void VectorQNet::append_params(ParamFile& file) const {
  file.meta["qnet.conditioning"] = conditioning_name(cond_);
  file.meta["qnet.state_dim"] = std::to_string(state_dim_);
  file.meta["qnet.num_actions"] = std::to_string(num_actions_);
  file.meta["qnet.num_objectives"] = std::to_string(num_objectives_);
  backbone_.append_params(file, "qnet.backbone");
  if (cond_ == Conditioning::kPreferenceAttention) {
    file.add_matrix("qnet.gate_w", gate_w_);
    file.add_vector("qnet.gate_b", gate_b_);
  }
}

VectorQNet VectorQNet::from_params(const ParamFile& file) {
  VectorQNet net;
  net.cond_ = conditioning_from_name(file.meta_at("qnet.conditioning"));
  net.state_dim_ = std::stoi(file.meta_at("qnet.state_dim"));
  net.num_actions_ = std::stoi(file.meta_at("qnet.num_actions"));
  net.num_objectives_ = std::stoi(file.meta_at("qnet.num_objectives"));
  net.backbone_ = Mlp::from_params(file, "qnet.backbone");
  if (net.cond_ == Conditioning::kPreferenceAttention) {
    net.gate_w_ = file.get_matrix("qnet.gate_w");
    net.gate_b_ = file.get_vector("qnet.gate_b");
  }
  return net;
}

std::vector<double> scalarized_action_values(std::span<const double> q,
                                             std::span<const double> weights, int num_actions) {
  const int k = static_cast<int>(weights.size());
  std::vector<double> s(num_actions, 0.0);
  for (int a = 0; a < num_actions; ++a) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += weights[j] * q[a * k + j];
    s[a] = acc;
  }
  return s;
}

QLearner::QLearner(const FlatTransitions& data, std::vector<double> rewards, QLearnConfig cfg)
    : data_(data), rewards_(std::move(rewards)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  if (cfg_.conditioning == Conditioning::kNone && cfg_.num_objectives != 1) {
    throw UsageError("QLearner: unconditioned training expects a single objective");
  }
  if (rewards_.size() != static_cast<size_t>(data_.size()) * cfg_.num_objectives) {
    throw UsageError("QLearner: reward matrix size mismatch");
  }
  if (cfg_.alpha < 0.0) throw UsageError("QLearner: alpha must be >= 0");
  net_ = VectorQNet(cfg_.conditioning, data_.state_dim, data_.num_actions,
                    cfg_.num_objectives, cfg_.hidden, cfg_.activation, rng_);
  target_ = net_;
  adam_ = AdamState(AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
}

Matrix QLearner::gather_states(std::span<const int> idx, bool next) const {
  Matrix m(static_cast<int>(idx.size()), data_.state_dim);
  for (size_t i = 0; i < idx.size(); ++i) {
    auto src = next ? data_.next_state(idx[i]) : data_.state(idx[i]);
    std::copy(src.begin(), src.end(), m.row(static_cast<int>(i)).begin());
  }
  return m;
}

std::vector<double> QLearner::bellman_targets(std::span<const int> idx,
                                              std::span<const double> pref) const {
  const int b = static_cast<int>(idx.size());
  const int k = cfg_.num_objectives;
  const int a_count = data_.num_actions;
  Matrix next_states = gather_states(idx, true);
  Matrix prefs(b, k);
  for (int i = 0; i < b; ++i) {
    std::copy(pref.begin(), pref.end(), prefs.row(i).begin());
  }
  Matrix q_target = target_.forward(next_states, prefs);
  Matrix q_online = net_.forward(next_states, prefs);
  std::vector<double> targets(static_cast<size_t>(b) * k);
  for (int i = 0; i < b; ++i) {
    const int tr = idx[i];
    const auto sel = scalarized_action_values(q_online.row(i), pref, a_count);
    const int a_star = argmax_tie_low(sel);
    const double not_done = data_.done[tr] ? 0.0 : 1.0;
    for (int j = 0; j < k; ++j) {
      targets[static_cast<size_t>(i) * k + j] =
          rewards_[static_cast<size_t>(tr) * k + j] +
          cfg_.gamma * not_done * q_target.row(i)[a_star * k + j];
    }
  }
  return targets;
}

double QLearner::step() {
  const int n = data_.size();
  const int b = std::min(cfg_.batch_size, n);
  const int k = cfg_.num_objectives;
  const int a_count = data_.num_actions;

  if (steps_ % cfg_.target_sync_period == 0) {
    target_ = net_;
    ++sync_count_;
  }

  std::vector<int> idx(b);
  for (int i = 0; i < b; ++i) idx[i] = rng_.uniform_int(n);

  const std::vector<double> pref =
      (cfg_.conditioning == Conditioning::kNone)
          ? std::vector<double>{1.0}
          : cfg_.sampler.next(rng_, steps_);

  const std::vector<double> targets = bellman_targets(idx, pref);

  Matrix states = gather_states(idx, false);
  Matrix prefs(b, k);
  for (int i = 0; i < b; ++i) std::copy(pref.begin(), pref.end(), prefs.row(i).begin());

  VectorQNet::Cache cache;
  Matrix q = net_.forward(states, prefs, &cache);

  Matrix dout(b, a_count * k);
  double mse = 0.0;
  for (int i = 0; i < b; ++i) {
    const int a = data_.actions[idx[i]];
    for (int j = 0; j < k; ++j) {
      const double diff = q.row(i)[a * k + j] - targets[static_cast<size_t>(i) * k + j];
      mse += diff * diff;
      dout.row(i)[a * k + j] = 2.0 * diff / b;
    }
  }
  mse /= b;
  double loss = mse;

  if (cfg_.alpha > 0.0) {
    // logsumexp_a s(a) - s(a_data) on scalarized values; always >= 0.
    double penalty = 0.0;
    for (int i = 0; i < b; ++i) {
      const auto s = scalarized_action_values(q.row(i), pref, a_count);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double x : s) z += std::exp(x - mx);
      const double lse = mx + std::log(z);
      const int a_data = data_.actions[idx[i]];
      penalty += lse - s[a_data];
      for (int a = 0; a < a_count; ++a) {
        const double soft = std::exp(s[a] - mx) / z;
        const double d = cfg_.alpha / b * (soft - (a == a_data ? 1.0 : 0.0));
        for (int j = 0; j < k; ++j) dout.row(i)[a * k + j] += d * pref[j];
      }
    }
    penalty /= b;
    min_penalty_ = std::min(min_penalty_, penalty);
    loss += cfg_.alpha * penalty;
  }

  VectorQNet::Grads grads = net_.zero_grads();
  net_.backward(cache, dout, &grads);
  auto params = net_.param_views();
  auto gviews = net_.grad_views(grads);
  adam_.step(params, gviews);

  ++steps_;
  losses_.push_back(loss);
  return loss;
}

void QLearner::run() {
  for (int i = 0; i < cfg_.iterations; ++i) step();
}

}  // namespace morlbench
