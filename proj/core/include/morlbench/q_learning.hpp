#pragma once

#include <limits>
#include <cstdint>
#include <span>
#include <vector>

#include "morlbench/dataset.hpp"
#include "morlbench/nn.hpp"
#include "morlbench/rng.hpp"

namespace morlbench {

enum class Conditioning { kNone, kConcat, kPreferenceAttention };

std::string conditioning_name(Conditioning c);
Conditioning conditioning_from_name(const std::string& name);

/// Draws preference weights for conditioned training. kUniform is uniform
/// on the simplex, with every 10th draw walking the evaluation grid so the
/// grid is guaranteed covered over a run. kFixed consumes no randomness.
struct PreferenceSampler {
  enum class Mode { kUniform, kGrid, kFixed };

  Mode mode = Mode::kUniform;
  double grid_step = 0.1;
  int num_objectives = 2;
  std::vector<double> fixed;

  std::vector<double> next(Rng& rng, int64_t step);
  std::vector<std::vector<double>> grid_points() const;

  static PreferenceSampler fixed_at(std::vector<double> w);

 private:
  size_t grid_cursor_ = 0;
};

std::string sampler_mode_name(PreferenceSampler::Mode m);

/// Q network with one value head per objective. Output row layout is
/// action-major: q[a * K + k]. Conditioning variants:
///   kNone                states only (used by the fixed-preference learners)
///   kConcat              backbone input is state concat preference
///   kPreferenceAttention preference gates the first hidden layer through
///                        multiplicative gains 2*sigmoid(.) in (0, 2)
class VectorQNet {
 public:
  struct Cache {
    MlpCache mlp;        // kNone / kConcat
    Matrix prefs;        // kPreferenceAttention path below
    Matrix gains;        // B x h1
    Matrix h_raw;        // post-activation, pre-gate
    std::vector<Matrix> acts;  // [input, h_gated, ..., out]
  };
  struct Grads {
    MlpGrads backbone;
    Matrix d_gate_w;
    std::vector<double> d_gate_b;
  };

  VectorQNet() = default;
  VectorQNet(Conditioning cond, int state_dim, int num_actions, int num_objectives,
             const std::vector<int>& hidden, Activation act, Rng& rng);

  Conditioning conditioning() const { return cond_; }
  int state_dim() const { return state_dim_; }
  int num_actions() const { return num_actions_; }
  int num_objectives() const { return num_objectives_; }

  /// states B x D; prefs B x K (ignored for kNone).
  Matrix forward(const Matrix& states, const Matrix& prefs, Cache* cache = nullptr) const;
  std::vector<double> forward_one(std::span<const double> state,
                                  std::span<const double> pref) const;

  Grads zero_grads() const;
  void backward(const Cache& cache, const Matrix& dout, Grads* grads) const;

  std::vector<std::span<double>> param_views();
  std::vector<std::span<const double>> grad_views(const Grads& g) const;

  /// Gate gains for a preference; defined only for kPreferenceAttention.
  std::vector<double> gate_gains(std::span<const double> pref) const;

  const Mlp& backbone() const { return backbone_; }
  Mlp& backbone() { return backbone_; }

  void append_params(ParamFile& file) const;
  static VectorQNet from_params(const ParamFile& file);

 private:
  Conditioning cond_ = Conditioning::kNone;
  int state_dim_ = 0;
  int num_actions_ = 0;
  int num_objectives_ = 1;
  Mlp backbone_;
  Matrix gate_w_;               // K x h1
  std::vector<double> gate_b_;  // h1
};

/// Scalarizes an action-major q row (A*K) to per-action values (A).
std::vector<double> scalarized_action_values(std::span<const double> q,
                                             std::span<const double> weights, int num_actions);

struct QLearnConfig {
  Conditioning conditioning = Conditioning::kNone;
  int num_objectives = 1;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kRelu;
  double gamma = 0.99;
  double alpha = 0.0;  // conservatism penalty weight
  double lr = 1e-3;
  int iterations = 6000;
  int batch_size = 256;
  int target_sync_period = 500;
  PreferenceSampler sampler;
  uint64_t seed = 0;
};

/// Offline double-Q regression on logged transitions, with an optional
/// conservatism penalty alpha * mean(logsumexp_a s(a) - s(a_data)) on the
/// scalarized values s. Action selection always uses the online network
/// and evaluation the periodically synced target network. One engine backs
/// the fixed-preference learners (K=1, rewards pre-scalarized) and the
/// preference-conditioned ones (K=2, vector rewards).
class QLearner {
 public:
  /// rewards: n x K row-major, objective index fastest.
  QLearner(const FlatTransitions& data, std::vector<double> rewards, QLearnConfig cfg);

  void run();
  double step();

  int64_t steps_done() const { return steps_; }
  int sync_count() const { return sync_count_; }
  const std::vector<double>& losses() const { return losses_; }
  /// Smallest per-batch mean penalty seen; meaningful only when alpha > 0.
  double min_penalty() const { return min_penalty_; }

  VectorQNet& net() { return net_; }
  const VectorQNet& net() const { return net_; }
  VectorQNet& target() { return target_; }
  const VectorQNet& target() const { return target_; }

  /// Double-Q targets for the given transitions under `pref` (test hook).
  std::vector<double> bellman_targets(std::span<const int> idx,
                                      std::span<const double> pref) const;

  const QLearnConfig& config() const { return cfg_; }

 private:
  Matrix gather_states(std::span<const int> idx, bool next) const;

  const FlatTransitions& data_;
  std::vector<double> rewards_;  // n x K
  QLearnConfig cfg_;
  Rng rng_;
  VectorQNet net_;
  VectorQNet target_;
  AdamState adam_;
  int64_t steps_ = 0;
  int sync_count_ = 0;
  std::vector<double> losses_;
  double min_penalty_ = std::numeric_limits<double>::infinity();
};

}  // namespace morlbench
