#include "morlbench/ope.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace morlbench {

BehaviorModel::BehaviorModel(std::shared_ptr<const Policy> base, double p_min)
    : base_(std::move(base)), p_min_(p_min) {
  const int a = base_->num_actions();
  if (!(p_min > 0.0) || !(p_min < 1.0 / a)) {
    throw UsageError("BehaviorModel: p_min must be in (0, 1/A)");
  }
}

std::vector<double> BehaviorModel::action_probs(std::span<const double> state) const {
  std::vector<double> p = base_->action_probs(state);
  const double keep = 1.0 - p.size() * p_min_;
  for (double& x : p) x = keep * x + p_min_;
  return p;
}

BehaviorModel fit_behavior(const Dataset& train, double p_min, uint64_t seed,
                           const BcConfig& bc_in) {
  BcConfig bc = bc_in;
  bc.seed = seed;
  BcResult fit = train_bc(train, bc);
  auto base = std::make_shared<SoftmaxPolicy>(std::move(fit.net));
  return BehaviorModel(std::move(base), p_min);
}

WisEvaluator::WisEvaluator(const Policy& policy, const Dataset& data,
                           const BehaviorModel& behavior, const PreferenceVector& w,
                           double gamma, double rho_clip) {
  if (rho_clip > 0.0 && rho_clip < 1.0) {
    throw UsageError("wis: rho_clip must be >= 1 (or <= 0 to disable)");
  }
  const int n = data.num_episodes();
  trace_.step_ratio.resize(n);
  trace_.cum_ratio.resize(n);
  trace_.episode_return.resize(n);
  int max_t = 0;
  for (int e = 0; e < n; ++e) {
    const Trajectory& traj = data.trajectories[e];
    const auto pi = policy.episode_action_probs(traj);
    const auto pib = behavior.episode_action_probs(traj);
    auto& steps = trace_.step_ratio[e];
    auto& cums = trace_.cum_ratio[e];
    double cum = 1.0;
    double ret = 0.0;
    double discount = 1.0;
    for (int t = 0; t < traj.length(); ++t) {
      const int a = traj.transitions[t].action;
      double rho = pi[t][a] / pib[t][a];
      if (rho_clip > 0.0) rho = std::clamp(rho, 1.0 / rho_clip, rho_clip);
      if (!std::isfinite(rho)) {
        throw DegenerateWeightsError("wis: non-finite importance ratio in episode " + traj.id);
      }
      cum *= rho;
      steps.push_back(rho);
      cums.push_back(cum);
      ret += discount * scalarize(traj.transitions[t].reward, w);
      discount *= gamma;
    }
    trace_.episode_return[e] = ret;
    max_t = std::max(max_t, traj.length());
  }
  trace_.avg_cum.assign(max_t, 0.0);
  for (int e = 0; e < n; ++e) {
    const auto& cums = trace_.cum_ratio[e];
    for (int t = 0; t < max_t; ++t) {
      // Episodes shorter than t keep their final cumulative ratio.
      trace_.avg_cum[t] += cums[std::min<size_t>(t, cums.size() - 1)];
    }
  }
  for (double& x : trace_.avg_cum) x /= n;
}

double WisEvaluator::value_on(std::span<const int> episode_idx) const {
  const int n = static_cast<int>(episode_idx.size());
  if (n == 0) throw UsageError("wis: empty episode set");
  int max_t = 0;
  for (int e : episode_idx) {
    max_t = std::max(max_t, static_cast<int>(trace_.cum_ratio[e].size()));
  }
  std::vector<double> w_t(max_t, 0.0);
  for (int e : episode_idx) {
    const auto& cums = trace_.cum_ratio[e];
    for (int t = 0; t < max_t; ++t) w_t[t] += cums[std::min<size_t>(t, cums.size() - 1)];
  }
  for (double& x : w_t) x /= n;

  double value = 0.0;
  for (int e : episode_idx) {
    const auto& cums = trace_.cum_ratio[e];
    const double w_final = w_t[cums.size() - 1];
    if (w_final == 0.0) {
      throw DegenerateWeightsError("wis: zero normalizing weight (cannot normalize)");
    }
    // The normalizer at an episode's own final time includes that episode's
    // cumulative ratio, so each normalized weight lies in [0, 1]. (With
    // mixed episode lengths the weights need not sum to 1 across episodes;
    // they do when all lengths are equal.)
    const double weight = cums.back() / (w_final * n);
    if (!(weight >= 0.0) || weight > 1.0 + 1e-9 || !std::isfinite(weight)) {
      throw std::logic_error("wis: normalized episode weight escaped [0, 1]");
    }
    value += weight * trace_.episode_return[e];
  }
  return value;
}

double WisEvaluator::full_value() const {
  std::vector<int> idx(num_episodes());
  std::iota(idx.begin(), idx.end(), 0);
  return value_on(idx);
}

WisResult wis(const Policy& policy, const Dataset& data, const BehaviorModel& behavior,
              const PreferenceVector& w, double gamma, double rho_clip) {
  WisEvaluator eval(policy, data, behavior, w, gamma, rho_clip);
  WisResult result;
  result.value = eval.full_value();
  result.trace = eval.trace();
  return result;
}

void write_ratio_trace(const RatioTrace& trace, const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("write_ratio_trace: cannot open " + path);
  out << "# episode_id t rho cum_rho\n";
  char buf[80];
  for (size_t e = 0; e < trace.step_ratio.size(); ++e) {
    for (size_t t = 0; t < trace.step_ratio[e].size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g", trace.step_ratio[e][t],
                    trace.cum_ratio[e][t]);
      out << data.trajectories[e].id << ' ' << (t + 1) << ' ' << buf << '\n';
    }
  }
}

FqeResult fqe(const Policy& policy, const Dataset& data, const PreferenceVector& w, double gamma,
              const FqeConfig& cfg) {
  if (cfg.iterations < 1) throw UsageError("fqe: iterations must be >= 1");
  validate(data);
  const FlatTransitions flat = FlatTransitions::from(data);
  const int n = flat.size();
  const int a_count = flat.num_actions;
  const std::vector<double> rewards = scalarized_rewards(flat, w);

  // Policy probabilities at successor states, computed once.
  Matrix pi_next(n, a_count);
  for (int i = 0; i < n; ++i) {
    if (flat.done[i]) continue;
    const auto p = policy.action_probs(flat.next_state(i));
    std::copy(p.begin(), p.end(), pi_next.row(i).begin());
  }

  double r_max = 0.0;
  for (double r : rewards) r_max = std::max(r_max, std::abs(r));
  const double v_max = std::max(1.0, r_max);
  const double denom = std::max(1.0 - gamma, 1e-2);
  const double divergence_threshold = 10.0 * v_max / denom;

  Matrix all_states(n, flat.state_dim);
  Matrix all_next(n, flat.state_dim);
  for (int i = 0; i < n; ++i) {
    std::copy(flat.state(i).begin(), flat.state(i).end(), all_states.row(i).begin());
    std::copy(flat.next_state(i).begin(), flat.next_state(i).end(), all_next.row(i).begin());
  }

  Rng root(cfg.seed);
  std::vector<int> dims;
  dims.push_back(flat.state_dim);
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(a_count);

  Mlp q;
  bool have_q = false;
  std::vector<double> targets(n, 0.0);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int it = 0; it < cfg.iterations; ++it) {
    // Bellman targets under the previous fit (zero on the first pass).
    if (!have_q) {
      for (int i = 0; i < n; ++i) targets[i] = rewards[i];
    } else {
      Matrix q_next = q.forward(all_next);
      for (int i = 0; i < n; ++i) {
        double v = 0.0;
        if (!flat.done[i]) {
          auto qr = q_next.row(i);
          auto pr = pi_next.row(i);
          for (int a = 0; a < a_count; ++a) v += pr[a] * qr[a];
        }
        targets[i] = rewards[i] + gamma * v;
      }
    }
    // Fresh regression each iteration (full refit).
    Rng rng = root.derive(static_cast<uint64_t>(it));
    Mlp net(dims, Activation::kRelu, rng);
    AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    for (int epoch = 0; epoch < cfg.regression_epochs; ++epoch) {
      rng.shuffle(order);
      for (int start = 0; start < n; start += cfg.batch_size) {
        const int b = std::min(cfg.batch_size, n - start);
        Matrix x(b, flat.state_dim);
        for (int i = 0; i < b; ++i) {
          auto s = flat.state(order[start + i]);
          std::copy(s.begin(), s.end(), x.row(i).begin());
        }
        MlpCache cache;
        Matrix out = net.forward(x, &cache);
        Matrix dout(b, a_count);
        for (int i = 0; i < b; ++i) {
          const int tr = order[start + i];
          const int a = flat.actions[tr];
          const double diff = out.row(i)[a] - targets[tr];
          dout.row(i)[a] = 2.0 * diff / b;
        }
        MlpGrads grads = net.backward(cache, dout);
        auto params = net.param_views();
        auto gviews = net.grad_views(grads);
        adam.step(params, gviews);
      }
    }
    q = std::move(net);
    have_q = true;

    Matrix q_all = q.forward(all_states);
    double mean_abs = 0.0;
    for (double x : q_all.v) mean_abs += std::abs(x);
    mean_abs /= q_all.v.size();
    if (mean_abs > divergence_threshold) {
      throw DivergenceError("fqe: mean |Q| " + std::to_string(mean_abs) +
                            " exceeded divergence threshold after iteration " +
                            std::to_string(it + 1));
    }
  }

  FqeResult result;
  const int n_episodes = data.num_episodes();
  result.initial_state_values.resize(n_episodes);
  double total = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    const auto& s1 = data.trajectories[e].transitions.front().state;
    const auto probs = policy.action_probs(s1);
    const auto qv = q.forward_one(s1);
    double v = 0.0;
    for (int a = 0; a < a_count; ++a) v += probs[a] * qv[a];
    result.initial_state_values[e] = v;
    total += v;
  }
  result.value = total / n_episodes;
  result.q = std::move(q);
  return result;
}

OpeEstimate bootstrap_ci(const std::function<double(std::span<const int>)>& estimator,
                         int n_episodes, const BootstrapConfig& cfg) {
  if (cfg.b < 100) throw UsageError("bootstrap_ci: B must be >= 100");
  if (!(cfg.level > 0.0) || !(cfg.level < 1.0)) {
    throw UsageError("bootstrap_ci: level must be in (0, 1)");
  }
  std::vector<int> identity(n_episodes);
  std::iota(identity.begin(), identity.end(), 0);
  OpeEstimate est;
  est.value = estimator(identity);
  est.n_bootstrap = cfg.b;

  Rng root(cfg.seed);
  std::vector<double> values;
  values.reserve(cfg.b);
  std::vector<int> idx(n_episodes);
  int draws = 0;
  int64_t draw_key = 0;
  while (static_cast<int>(values.size()) < cfg.b) {
    if (draws >= 3 * cfg.b) {
      throw UsageError("bootstrap_ci: too many failed resamples");
    }
    Rng rng = root.derive(static_cast<uint64_t>(draw_key++));
    for (int i = 0; i < n_episodes; ++i) idx[i] = rng.uniform_int(n_episodes);
    ++draws;
    try {
      values.push_back(estimator(idx));
    } catch (const std::exception&) {
      continue;  // retried with a fresh draw
    }
  }
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - cfg.level;
  auto quantile = [&](double p) {
    const double h = p * (values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(values.size() - 1, lo + 1);
    const double frac = h - lo;
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  est.ci_lower = std::min(quantile(alpha / 2.0), est.value);
  est.ci_upper = std::max(quantile(1.0 - alpha / 2.0), est.value);
  return est;
}

}  // namespace morlbench
