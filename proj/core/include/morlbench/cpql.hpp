#pragma once

#include <memory>

#include "morlbench/dataset.hpp"
#include "morlbench/policy.hpp"
#include "morlbench/q_learning.hpp"

namespace morlbench {

struct CpqlConfig {
  Conditioning variant = Conditioning::kConcat;  // kConcat or kPreferenceAttention
  double alpha = 1.0;
  double gamma = 0.99;
  int iterations = 8000;
  int batch_size = 256;
  int target_sync_period = 500;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  PreferenceSampler sampler;  // defaults to uniform over the simplex
  uint64_t seed = 0;
};

struct CpqlResult {
  VectorQNet model;
  std::vector<double> losses;
  double min_penalty = 0.0;
  PreferenceSampler::Mode sampler_mode = PreferenceSampler::Mode::kUniform;
};

/// Preference-conditioned conservative Q-learning. Each update samples a
/// preference, selects the bootstrap action by the scalarized online values
/// (double-Q style) and regresses per-objective targets, with a scalarized
/// conservatism penalty weighted by alpha.
CpqlResult train_cpql(const Dataset& train, const CpqlConfig& cfg);

/// Epsilon-soft greedy policy over the scalarized values w^T Q(s, .; w).
class CpqlPolicy : public Policy {
 public:
  CpqlPolicy(std::shared_ptr<const VectorQNet> model, PreferenceVector w, double epsilon);
  int num_actions() const override { return model_->num_actions(); }
  std::vector<double> action_probs(std::span<const double> state) const override;

 private:
  std::shared_ptr<const VectorQNet> model_;
  std::vector<double> weights_;
  double epsilon_;
};

std::unique_ptr<Policy> policy_at(std::shared_ptr<const VectorQNet> model,
                                  const PreferenceVector& w, double epsilon);

}  // namespace morlbench
