#pragma once

#include <cstdint>
#include <memory>

#include "morlbench/dataset.hpp"
#include "morlbench/policy.hpp"
#include "morlbench/rng.hpp"
#include "morlbench/types.hpp"

namespace morlbench {

/// Parametric severity-chain MDP. Feature 0 is a latent severity in [0,1],
/// feature 1 is elapsed time over t_max (so the length-of-stay objective
/// stays Markov in the observed state), and the remaining D-2 features are
/// per-step Gaussian distractors. An action close to the severity-matched
/// one pulls severity down, a mismatched one lets it drift up. Discharge at
/// severity 0, death at severity 1, censoring at T_max (counted as
/// survival).
struct EnvConfig {
  int state_dim = 8;            // D >= 2
  int num_actions = 5;          // A >= 2
  int t_max = 20;               // T_max >= 2
  double severity_drift = 0.09;
  double treatment_effect = 0.17;
  double noise_std = 0.07;
  uint64_t seed = 0;

  void validate() const;
};

struct EnvState {
  std::vector<double> features;  // [0] severity, [1] elapsed time fraction
  int step = 0;                  // transitions taken so far
  bool terminal = false;
};

struct StepResult {
  EnvState next;
  VectorReward reward;
  bool done = false;
};

class SynthIcuEnv {
 public:
  explicit SynthIcuEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }

  EnvState reset(Rng& rng) const;

  /// Severity update: drift - treatment_effect * match(a, severity) + noise.
  /// Terminal rewards: mortality 1 on survival (discharge or censor) else 0;
  /// los 1 - T/T_max clipped to [0,1]. Throws UsageError on a finished state.
  StepResult step(const EnvState& s, int action, Rng& rng) const;

  /// Action whose intensity bucket matches the severity.
  int matched_action(double severity) const;
  /// 1 for the matched action, falling by 0.5 per bucket of distance
  /// (negative for grossly mismatched treatment).
  double match(int action, double severity) const;

 private:
  EnvConfig cfg_;
};

/// Epsilon-soft severity-matched heuristic standing in for the logging
/// clinician. Full support: every action has probability >= epsilon/A.
struct ClinicianPolicy {
  double epsilon = 0.3;

  std::vector<double> probs(const SynthIcuEnv& env, double severity) const;
  int sample(const SynthIcuEnv& env, const EnvState& s, Rng& rng) const;
};

/// Policy adapter for the clinician heuristic, usable by the OPE stack.
/// Recovers raw severity from normalized feature 0 via the dataset stats.
class ClinicianPolicyAdapter : public Policy {
 public:
  ClinicianPolicyAdapter(EnvConfig cfg, double epsilon, NormalizationStats stats);
  int num_actions() const override { return env_.config().num_actions; }
  std::vector<double> action_probs(std::span<const double> state) const override;

 private:
  SynthIcuEnv env_;
  ClinicianPolicy clinician_;
  NormalizationStats stats_;
};

/// Rolls out `episodes` full episodes under the clinician policy and
/// returns the z-scored dataset (stats recorded). Deterministic in cfg.seed.
Dataset generate_dataset(const EnvConfig& cfg, int episodes, double behavior_epsilon = 0.3);

struct OracleValue {
  double mean = 0.0;
  double std_error = 0.0;
  int rollouts = 0;
};

/// Monte Carlo ground truth: mean scalarized discounted return of `policy`
/// over `rollouts` fresh episodes. The policy sees z-scored features via
/// `stats`. Per-rollout streams are derived from `seed`, so two policies
/// evaluated with the same seed share common random numbers.
OracleValue true_policy_value(const SynthIcuEnv& env, const Policy& policy,
                              const NormalizationStats& stats, const PreferenceVector& w,
                              double gamma, int rollouts, uint64_t seed);

/// Component-wise version of true_policy_value (mortality, los).
struct OracleVectorValue {
  VectorReward mean;
  VectorReward std_error;
  double mean_length = 0.0;
};
OracleVectorValue true_policy_vector_value(const SynthIcuEnv& env, const Policy& policy,
                                           const NormalizationStats& stats, double gamma,
                                           int rollouts, uint64_t seed);

}  // namespace morlbench
