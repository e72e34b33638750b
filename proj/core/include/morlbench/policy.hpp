#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "morlbench/nn.hpp"
#include "morlbench/rng.hpp"
#include "morlbench/types.hpp"

namespace morlbench {

/// Stateful view of a policy for simulator rollouts. History-free policies
/// ignore record(); the decision transformer uses it to advance its
/// running context.
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  virtual std::vector<double> action_probs(std::span<const double> state) = 0;
  virtual void record(int action, const VectorReward& reward) {
    (void)action;
    (void)reward;
  }
};

/// Stochastic discrete-action policy over normalized state features.
/// action_probs must return a valid distribution (entries >= 0, sum 1
/// within 1e-9) for every state.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int num_actions() const = 0;
  virtual std::vector<double> action_probs(std::span<const double> state) const = 0;

  /// Action distributions at every step of a logged episode. The default
  /// evaluates action_probs per state; history-conditioned policies
  /// override this to roll their context along the logged prefix.
  virtual std::vector<std::vector<double>> episode_action_probs(const Trajectory& traj) const;

  virtual std::unique_ptr<PolicySession> session() const;
};

int sample_action(std::span<const double> probs, Rng& rng);

/// Index of the maximum entry; ties broken by lowest index.
int argmax_tie_low(std::span<const double> values);

/// Test/fixture policy defined by an arbitrary state -> probs function.
class FunctionPolicy : public Policy {
 public:
  FunctionPolicy(int num_actions,
                 std::function<std::vector<double>(std::span<const double>)> fn)
      : num_actions_(num_actions), fn_(std::move(fn)) {}
  int num_actions() const override { return num_actions_; }
  std::vector<double> action_probs(std::span<const double> state) const override {
    return fn_(state);
  }

 private:
  int num_actions_;
  std::function<std::vector<double>(std::span<const double>)> fn_;
};

/// Softmax policy over the logits of a classifier network.
class SoftmaxPolicy : public Policy {
 public:
  explicit SoftmaxPolicy(Mlp net) : net_(std::move(net)) {}
  int num_actions() const override { return net_.output_dim(); }
  std::vector<double> action_probs(std::span<const double> state) const override {
    return softmax(net_.forward_one(state));
  }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

/// Epsilon-soft greedy policy over the action values of a Q network:
/// probability 1 - eps + eps/A on the argmax (ties to the lowest action
/// id), eps/A elsewhere.
class EpsGreedyQPolicy : public Policy {
 public:
  EpsGreedyQPolicy(Mlp q, double epsilon);
  int num_actions() const override { return q_.output_dim(); }
  std::vector<double> action_probs(std::span<const double> state) const override;
  const Mlp& q() const { return q_; }
  double epsilon() const { return epsilon_; }

 private:
  Mlp q_;
  double epsilon_;
};

std::vector<double> eps_greedy_probs(std::span<const double> values, double epsilon);

}  // namespace morlbench
