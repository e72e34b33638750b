#include "morlbench/synth_icu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace morlbench {

namespace {

constexpr double kInitSeverityLo = 0.4;
constexpr double kInitSeverityHi = 0.9;

}  // namespace

void EnvConfig::validate() const {
  if (state_dim < 2) throw ValidationError("EnvConfig: state_dim must be >= 2");
  if (num_actions < 2) throw ValidationError("EnvConfig: num_actions must be >= 2");
  if (t_max < 2) throw ValidationError("EnvConfig: t_max must be >= 2");
  if (!(noise_std > 0.0)) throw ValidationError("EnvConfig: noise_std must be > 0");
}

SynthIcuEnv::SynthIcuEnv(EnvConfig cfg) : cfg_(cfg) { cfg_.validate(); }

int SynthIcuEnv::matched_action(double severity) const {
  int a = static_cast<int>(severity * cfg_.num_actions);
  return std::clamp(a, 0, cfg_.num_actions - 1);
}

double SynthIcuEnv::match(int action, double severity) const {
  // Falls off by half per intensity bucket and goes negative two buckets
  // out: a grossly mismatched treatment actively harms the patient.
  const int a_star = matched_action(severity);
  return 1.0 - 0.5 * std::abs(action - a_star);
}

EnvState SynthIcuEnv::reset(Rng& rng) const {
  EnvState s;
  s.features.resize(cfg_.state_dim);
  s.features[0] = rng.uniform(kInitSeverityLo, kInitSeverityHi);
  s.features[1] = 0.0;  // elapsed time, keeps the LOS objective Markov
  for (int j = 2; j < cfg_.state_dim; ++j) s.features[j] = rng.normal();
  s.step = 0;
  s.terminal = false;
  return s;
}

StepResult SynthIcuEnv::step(const EnvState& s, int action, Rng& rng) const {
  if (s.terminal || s.step >= cfg_.t_max) {
    throw UsageError("SynthIcuEnv::step: episode already finished");
  }
  if (action < 0 || action >= cfg_.num_actions) {
    throw UsageError("SynthIcuEnv::step: action out of range");
  }
  const double severity = s.features[0];
  double next_sev = severity + cfg_.severity_drift -
                    cfg_.treatment_effect * match(action, severity) +
                    rng.normal(0.0, cfg_.noise_std);

  StepResult res;
  res.next.features.resize(cfg_.state_dim);
  res.next.step = s.step + 1;

  const bool death = next_sev >= 1.0;
  const bool discharge = next_sev <= 0.0;
  const bool censored = res.next.step >= cfg_.t_max;
  res.done = death || discharge || censored;

  res.next.features[0] = std::clamp(next_sev, 0.0, 1.0);
  res.next.features[1] = static_cast<double>(res.next.step) / cfg_.t_max;
  for (int j = 2; j < cfg_.state_dim; ++j) res.next.features[j] = rng.normal();
  res.next.terminal = res.done;

  if (res.done) {
    const bool survived = !death;  // T_max censoring counts as survival
    res.reward.mortality = survived ? 1.0 : 0.0;
    const double t = static_cast<double>(res.next.step);
    res.reward.los = std::clamp(1.0 - t / cfg_.t_max, 0.0, 1.0);
  }
  return res;
}

std::vector<double> ClinicianPolicy::probs(const SynthIcuEnv& env, double severity) const {
  const int a = env.config().num_actions;
  std::vector<double> p(a, epsilon / a);
  p[env.matched_action(severity)] += 1.0 - epsilon;
  return p;
}

int ClinicianPolicy::sample(const SynthIcuEnv& env, const EnvState& s, Rng& rng) const {
  if (rng.uniform() < epsilon) return rng.uniform_int(env.config().num_actions);
  return env.matched_action(s.features[0]);
}

ClinicianPolicyAdapter::ClinicianPolicyAdapter(EnvConfig cfg, double epsilon,
                                               NormalizationStats stats)
    : env_(cfg), clinician_{epsilon}, stats_(std::move(stats)) {}

std::vector<double> ClinicianPolicyAdapter::action_probs(std::span<const double> state) const {
  const double severity = stats_.mean[0] + stats_.stddev[0] * state[0];
  return clinician_.probs(env_, severity);
}

Dataset generate_dataset(const EnvConfig& cfg, int episodes, double behavior_epsilon) {
  if (episodes < 1) throw UsageError("generate_dataset: episodes must be >= 1");
  SynthIcuEnv env(cfg);
  ClinicianPolicy clinician{behavior_epsilon};
  Rng root(cfg.seed);

  Dataset raw;
  raw.num_actions = cfg.num_actions;
  raw.feature_names.push_back("severity");
  raw.feature_names.push_back("chart_time");
  for (int j = 2; j < cfg.state_dim; ++j) raw.feature_names.push_back("vital_" + std::to_string(j));
  raw.stats.mean.assign(cfg.state_dim, 0.0);
  raw.stats.stddev.assign(cfg.state_dim, 1.0);

  for (int n = 0; n < episodes; ++n) {
    Rng rng = root.derive(static_cast<uint64_t>(n));
    char id[32];
    std::snprintf(id, sizeof(id), "ep%06d", n);
    Trajectory traj;
    traj.id = id;
    EnvState s = env.reset(rng);
    bool done = false;
    int t = 1;
    while (!done) {
      const int action = clinician.sample(env, s, rng);
      StepResult res = env.step(s, action, rng);
      Transition tr;
      tr.state = s.features;
      tr.action = action;
      tr.reward = res.reward;
      tr.done = res.done;
      tr.t = t++;
      traj.transitions.push_back(std::move(tr));
      s = std::move(res.next);
      done = res.done;
    }
    raw.trajectories.push_back(std::move(traj));
  }
  Dataset normalized = normalize_features(raw);
  validate(normalized);
  return normalized;
}

OracleValue true_policy_value(const SynthIcuEnv& env, const Policy& policy,
                              const NormalizationStats& stats, const PreferenceVector& w,
                              double gamma, int rollouts, uint64_t seed) {
  if (rollouts < 1) throw UsageError("true_policy_value: rollouts must be >= 1");
  Rng root(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> z(env.config().state_dim);
  for (int m = 0; m < rollouts; ++m) {
    Rng rng = root.derive(static_cast<uint64_t>(m));
    auto session = policy.session();
    EnvState s = env.reset(rng);
    double ret = 0.0;
    double discount = 1.0;
    bool done = false;
    while (!done) {
      z = s.features;
      stats.apply(z);
      const auto probs = session->action_probs(z);
      const int action = sample_action(probs, rng);
      StepResult res = env.step(s, action, rng);
      session->record(action, res.reward);
      ret += discount * scalarize(res.reward, w);
      discount *= gamma;
      s = std::move(res.next);
      done = res.done;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  OracleValue out;
  out.rollouts = rollouts;
  out.mean = sum / rollouts;
  const double var = std::max(0.0, sum_sq / rollouts - out.mean * out.mean);
  out.std_error = rollouts > 1 ? std::sqrt(var / (rollouts - 1)) : 0.0;
  return out;
}

OracleVectorValue true_policy_vector_value(const SynthIcuEnv& env, const Policy& policy,
                                           const NormalizationStats& stats, double gamma,
                                           int rollouts, uint64_t seed) {
  if (rollouts < 1) throw UsageError("true_policy_vector_value: rollouts must be >= 1");
  Rng root(seed);
  VectorReward sum, sum_sq;
  double length_sum = 0.0;
  std::vector<double> z(env.config().state_dim);
  for (int m = 0; m < rollouts; ++m) {
    Rng rng = root.derive(static_cast<uint64_t>(m));
    auto session = policy.session();
    EnvState s = env.reset(rng);
    VectorReward ret;
    double discount = 1.0;
    bool done = false;
    int steps = 0;
    while (!done) {
      z = s.features;
      stats.apply(z);
      const auto probs = session->action_probs(z);
      const int action = sample_action(probs, rng);
      StepResult res = env.step(s, action, rng);
      session->record(action, res.reward);
      ret += discount * res.reward;
      discount *= gamma;
      s = std::move(res.next);
      done = res.done;
      ++steps;
    }
    sum += ret;
    sum_sq.mortality += ret.mortality * ret.mortality;
    sum_sq.los += ret.los * ret.los;
    length_sum += steps;
  }
  OracleVectorValue out;
  out.mean = (1.0 / rollouts) * sum;
  const double var_m = std::max(0.0, sum_sq.mortality / rollouts - out.mean.mortality * out.mean.mortality);
  const double var_l = std::max(0.0, sum_sq.los / rollouts - out.mean.los * out.mean.los);
  if (rollouts > 1) {
    out.std_error.mortality = std::sqrt(var_m / (rollouts - 1));
    out.std_error.los = std::sqrt(var_l / (rollouts - 1));
  }
  out.mean_length = length_sum / rollouts;
  return out;
}

}  // namespace morlbench
