#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "morlbench/dataset.hpp"
#include "morlbench/policy.hpp"

namespace morlbench {

struct DtConfig {
  int context_length = 10;  // timesteps per window
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  double dropout = 0.0;  // must stay 0; kept for config compatibility
  uint64_t seed = 0;

  // Filled from the dataset.
  int state_dim = 0;
  int num_actions = 0;
  int num_objectives = 2;

  double lr = 1e-3;
  int batch_size = 64;

  void validate() const;
};

/// One training/inference window of at most context_length steps. Steps
/// occupy a contiguous run of slots (left-padded for short prefixes);
/// padded slots are masked out of attention and loss. rtg holds the
/// undiscounted suffix sums of the vector rewards.
struct DtWindow {
  int length = 0;  // slots, == context_length for dataset windows
  std::vector<std::array<double, 2>> rtg;
  std::vector<std::array<double, 2>> pref;
  Matrix states;                     // length x D, padded rows zero
  std::vector<int> actions;          // -1 where padded/unknown
  std::vector<uint8_t> step_valid;   // slot holds a real step
  std::vector<uint8_t> action_valid; // slot's action token participates
  std::string episode_id;
  int first_step = 0;  // 1-based episode timestep of the first valid slot
};

/// Non-overlapping windows over every episode, each with rtg suffix sums
/// (gamma fixed at 1 for the sequence targets). The training preference
/// token is the normalized direction of the episode's total return, or
/// [0.5, 0.5] when that total is zero.
std::vector<DtWindow> build_sequences(const Dataset& d, const DtConfig& cfg);

/// Multi-head causal transformer over interleaved (return-prompt, state,
/// action) tokens; logits at state tokens predict that step's action.
/// Masked slots are skipped outright, so corrupting future or padded
/// tokens cannot perturb earlier logits even at the bit level.
class DecisionTransformer {
 public:
  struct LayerParams {
    std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
    Matrix wq, wk, wv, wo;
    std::vector<double> bq, bk, bv, bo;
    Matrix w_ff1, w_ff2;
    std::vector<double> b_ff1, b_ff2;
  };
  struct Params {
    Matrix w_prompt;  // 2K x E
    Matrix w_state;   // D x E
    Matrix emb_action;  // (A+1) x E, last row = "no action" slot
    Matrix pos;         // 3L x E
    std::vector<double> b_prompt, b_state;
    std::vector<LayerParams> layers;
    std::vector<double> lnf_g, lnf_b;
    Matrix w_head;  // E x A
    std::vector<double> b_head;
  };
  struct Cache;  // defined in the .cpp

  DecisionTransformer() = default;
  DecisionTransformer(DtConfig cfg, Rng& rng);

  const DtConfig& config() const { return cfg_; }

  /// Per-slot action logits (length x A); rows of invalid slots are zero.
  Matrix forward_window(const DtWindow& w, Cache* cache = nullptr) const;

  /// Mean cross-entropy over the valid action positions of the batch, with
  /// one Adam update. Returns the loss.
  double train_step(const std::vector<const DtWindow*>& batch, AdamState& adam);

  /// Mean cross-entropy without updating (evaluation).
  double eval_loss(const std::vector<const DtWindow*>& batch) const;

  /// Loss plus parameter gradients without an update.
  std::pair<double, Params> loss_and_grads(const std::vector<const DtWindow*>& batch) const;
  std::vector<std::span<const double>> grad_views(const Params& g) const;

  /// Fraction of valid positions whose argmax logit equals the logged action.
  double action_accuracy(const std::vector<DtWindow>& windows) const;

  std::vector<std::span<double>> param_views();

  double max_total_return() const { return max_total_return_; }
  void set_max_total_return(double v) { max_total_return_ = v; }

  void append_params(ParamFile& file) const;
  static DecisionTransformer from_params(const ParamFile& file);

  const Params& params() const { return p_; }
  Params& params() { return p_; }

 private:
  void backward_window(const DtWindow& w, const Cache& cache, const Matrix& dlogits,
                       Params& grads) const;
  Params zeros_like() const;

  DtConfig cfg_;
  Params p_;
  double max_total_return_ = 0.0;
};

struct DtTrainResult {
  DecisionTransformer model;
  std::vector<double> epoch_losses;
};

DtTrainResult train_dt(const Dataset& train, const DtConfig& cfg, int epochs);

/// Policy wrapper: keeps a running context whose return prompt starts at
/// target_rtg_scale * max_total_return * w and is decremented by observed
/// rewards; softmax action probabilities are blended with an eps-uniform
/// floor. The history-free action_probs (used by FQE) scores the state
/// under a fresh single-step context.
class DtPolicy : public Policy {
 public:
  DtPolicy(std::shared_ptr<const DecisionTransformer> model, PreferenceVector w,
           double target_rtg_scale, double epsilon);

  int num_actions() const override;
  std::vector<double> action_probs(std::span<const double> state) const override;
  std::vector<std::vector<double>> episode_action_probs(const Trajectory& traj) const override;
  std::unique_ptr<PolicySession> session() const override;

  std::array<double, 2> initial_rtg() const;

 private:
  std::shared_ptr<const DecisionTransformer> model_;
  PreferenceVector w_;
  double target_rtg_scale_;
  double epsilon_;
};

std::unique_ptr<Policy> dt_policy(std::shared_ptr<const DecisionTransformer> model,
                                  const PreferenceVector& w, double target_rtg_scale,
                                  double epsilon);

}  // namespace morlbench
