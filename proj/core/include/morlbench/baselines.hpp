#pragma once

#include <cstdint>

#include "morlbench/dataset.hpp"
#include "morlbench/policy.hpp"
#include "morlbench/q_learning.hpp"

namespace morlbench {

struct BcConfig {
  int epochs = 15;
  int batch_size = 256;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kRelu;
  double lr = 1e-3;
  uint64_t seed = 0;
};

struct BcResult {
  Mlp net;  // action logits
  std::vector<double> epoch_losses;
};

/// Cross-entropy classifier on the logged (state, action) pairs; the
/// resulting policy's probabilities are the softmax outputs.
BcResult train_bc(const Dataset& train, const BcConfig& cfg);

struct QBaselineConfig {
  double gamma = 0.99;
  double alpha = 1.0;  // only used by train_cql
  int iterations = 6000;
  int batch_size = 256;
  int target_sync_period = 500;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  uint64_t seed = 0;
};

struct QBaselineResult {
  Mlp q;  // state -> A action values
  std::vector<double> losses;
  int sync_count = 0;
  double min_penalty = 0.0;
};

/// Offline double DQN on rewards scalarized at the fixed preference w.
QBaselineResult train_ddqn(const Dataset& train, const PreferenceVector& w,
                           const QBaselineConfig& cfg);

/// DDQN loss plus alpha * mean(logsumexp_a Q(s,a) - Q(s,a_data)).
/// With alpha == 0 the update sequence is identical to train_ddqn.
QBaselineResult train_cql(const Dataset& train, const PreferenceVector& w,
                          const QBaselineConfig& cfg);

/// Epsilon-soft greedy wrapper over a Q model: probability 1-eps+eps/A on
/// the argmax (ties to the lowest action id), eps/A elsewhere.
std::unique_ptr<Policy> greedy_policy(Mlp q, double epsilon);

/// Scalarizes dataset rewards into an n x 1 matrix for the K=1 engine.
std::vector<double> scalarized_rewards(const FlatTransitions& data, const PreferenceVector& w);

}  // namespace morlbench
