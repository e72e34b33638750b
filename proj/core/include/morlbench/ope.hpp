#pragma once

#include <functional>
#include <memory>

#include "morlbench/baselines.hpp"
#include "morlbench/dataset.hpp"
#include "morlbench/policy.hpp"

namespace morlbench {

class DegenerateWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Estimated behavior policy with a uniform probability floor:
/// p'(a|s) = (1 - A*p_min) * p(a|s) + p_min, so every action has
/// probability >= p_min exactly and rows still sum to 1.
class BehaviorModel : public Policy {
 public:
  BehaviorModel(std::shared_ptr<const Policy> base, double p_min);

  int num_actions() const override { return base_->num_actions(); }
  std::vector<double> action_probs(std::span<const double> state) const override;

  double p_min() const { return p_min_; }
  const Policy& base() const { return *base_; }

 private:
  std::shared_ptr<const Policy> base_;
  double p_min_;
};

/// Behavior cloning followed by the probability floor. Requires
/// 0 < p_min < 1/A.
BehaviorModel fit_behavior(const Dataset& train, double p_min, uint64_t seed,
                           const BcConfig& bc = {});

/// Per-episode importance ratio audit trail.
struct RatioTrace {
  std::vector<std::vector<double>> step_ratio;  // rho_t, clipped
  std::vector<std::vector<double>> cum_ratio;   // rho_{1:t}
  std::vector<double> avg_cum;                  // w_t over all episodes, t = 1..max T
  std::vector<double> episode_return;           // discounted scalarized return
};

struct WisResult {
  double value = 0.0;
  RatioTrace trace;
};

/// Weighted importance sampling over logged episodes: per-step ratios
/// pi/pi_b clipped to [1/rho_clip, rho_clip], cumulative products, and the
/// self-normalized estimator. Episodes shorter than t carry their final
/// cumulative ratio forward into w_t. rho_clip <= 0 disables clipping.
WisResult wis(const Policy& policy, const Dataset& data, const BehaviorModel& behavior,
              const PreferenceVector& w, double gamma, double rho_clip = 20.0);

/// Caches per-episode ratio products and returns so that resampled
/// re-evaluation (the bootstrap) costs one pass over the index multiset.
class WisEvaluator {
 public:
  WisEvaluator(const Policy& policy, const Dataset& data, const BehaviorModel& behavior,
               const PreferenceVector& w, double gamma, double rho_clip);

  double full_value() const;
  /// Estimator over an episode index multiset (with repetitions).
  double value_on(std::span<const int> episode_idx) const;
  const RatioTrace& trace() const { return trace_; }
  int num_episodes() const { return static_cast<int>(trace_.episode_return.size()); }

 private:
  RatioTrace trace_;
};

void write_ratio_trace(const RatioTrace& trace, const Dataset& data, const std::string& path);

struct FqeConfig {
  int iterations = 50;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  int batch_size = 256;
  int regression_epochs = 2;
  uint64_t seed = 0;
};

struct FqeResult {
  double value = 0.0;
  std::vector<double> initial_state_values;  // per episode
  Mlp q;
};

/// Fitted Q evaluation: iterates a fresh regression of
/// r + gamma * (1 - done) * sum_a pi(a|s') Q_prev(s', a) on the logged
/// transitions, then averages sum_a pi(a|s_1) Q(s_1, a) over episode
/// initial states. Aborts with DivergenceError if mean |Q| blows past
/// 10 * V_max / (1 - gamma).
FqeResult fqe(const Policy& policy, const Dataset& data, const PreferenceVector& w, double gamma,
              const FqeConfig& cfg);

struct OpeEstimate {
  double value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  int n_bootstrap = 0;
  std::string metric;
  PreferenceVector preference;

  double ci_width() const { return ci_upper - ci_lower; }
};

struct BootstrapConfig {
  int b = 1000;
  double level = 0.95;
  uint64_t seed = 0;
};

/// Episode-level percentile bootstrap. `estimator` maps an episode index
/// multiset to a value; the point estimate uses the identity indices. A
/// resample that throws is retried with a fresh draw, up to 3B draws in
/// total. Quantiles use linear interpolation between order statistics, and
/// the interval is widened if needed so ci_lower <= value <= ci_upper.
OpeEstimate bootstrap_ci(const std::function<double(std::span<const int>)>& estimator,
                         int n_episodes, const BootstrapConfig& cfg);

}  // namespace morlbench
