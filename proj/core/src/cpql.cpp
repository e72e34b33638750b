#include "morlbench/cpql.hpp"

namespace morlbench {

CpqlResult train_cpql(const Dataset& train, const CpqlConfig& cfg) {
  if (cfg.variant == Conditioning::kNone) {
    throw UsageError("train_cpql: variant must be concat or preference_attention");
  }
  validate(train);
  const FlatTransitions data = FlatTransitions::from(train);

  QLearnConfig qcfg;
  qcfg.conditioning = cfg.variant;
  qcfg.num_objectives = cfg.sampler.num_objectives;
  qcfg.hidden = cfg.hidden;
  qcfg.gamma = cfg.gamma;
  qcfg.alpha = cfg.alpha;
  qcfg.lr = cfg.lr;
  qcfg.iterations = cfg.iterations;
  qcfg.batch_size = cfg.batch_size;
  qcfg.target_sync_period = cfg.target_sync_period;
  qcfg.sampler = cfg.sampler;
  qcfg.seed = cfg.seed;

  const int k = qcfg.num_objectives;
  std::vector<double> rewards(static_cast<size_t>(data.size()) * k);
  for (int i = 0; i < data.size(); ++i) {
    if (k == 1) {
      // Degenerate single-objective configuration: first objective only.
      rewards[i] = data.rewards[i].mortality;
    } else {
      rewards[static_cast<size_t>(i) * k] = data.rewards[i].mortality;
      rewards[static_cast<size_t>(i) * k + 1] = data.rewards[i].los;
    }
  }

  QLearner learner(data, std::move(rewards), qcfg);
  learner.run();

  CpqlResult result;
  result.model = learner.net();
  result.losses = learner.losses();
  result.min_penalty = cfg.alpha > 0.0 ? learner.min_penalty() : 0.0;
  result.sampler_mode = cfg.sampler.mode;
  return result;
}

CpqlPolicy::CpqlPolicy(std::shared_ptr<const VectorQNet> model, PreferenceVector w,
                       double epsilon)
    : model_(std::move(model)), epsilon_(epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("CpqlPolicy: epsilon must be in [0, 1]");
  if (model_->num_objectives() != 2) {
    throw UsageError("CpqlPolicy: model must have two objectives");
  }
  weights_ = {w.w_mortality(), w.w_los()};
}

std::vector<double> CpqlPolicy::action_probs(std::span<const double> state) const {
  const auto q = model_->forward_one(state, weights_);
  const auto s = scalarized_action_values(q, weights_, model_->num_actions());
  return eps_greedy_probs(s, epsilon_);
}

std::unique_ptr<Policy> policy_at(std::shared_ptr<const VectorQNet> model,
                                  const PreferenceVector& w, double epsilon) {
  return std::make_unique<CpqlPolicy>(std::move(model), w, epsilon);
}

}  // namespace morlbench
