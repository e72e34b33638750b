#include "morlbench/policy.hpp"

namespace morlbench {

namespace {

class StatelessSession : public PolicySession {
 public:
  explicit StatelessSession(const Policy& policy) : policy_(policy) {}
  std::vector<double> action_probs(std::span<const double> state) override {
    return policy_.action_probs(state);
  }

 private:
  const Policy& policy_;
};

}  // namespace

std::vector<std::vector<double>> Policy::episode_action_probs(const Trajectory& traj) const {
  std::vector<std::vector<double>> out;
  out.reserve(traj.transitions.size());
  for (const Transition& tr : traj.transitions) out.push_back(action_probs(tr.state));
  return out;
}

std::unique_ptr<PolicySession> Policy::session() const {
  return std::make_unique<StatelessSession>(*this);
}

int sample_action(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

int argmax_tie_low(std::span<const double> values) {
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> eps_greedy_probs(std::span<const double> values, double epsilon) {
  const int a_star = argmax_tie_low(values);
  const double n = static_cast<double>(values.size());
  std::vector<double> probs(values.size(), epsilon / n);
  probs[a_star] = 1.0 - epsilon + epsilon / n;
  return probs;
}

EpsGreedyQPolicy::EpsGreedyQPolicy(Mlp q, double epsilon) : q_(std::move(q)), epsilon_(epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw UsageError("EpsGreedyQPolicy: epsilon must be in [0, 1]");
  }
}

std::vector<double> EpsGreedyQPolicy::action_probs(std::span<const double> state) const {
  return eps_greedy_probs(q_.forward_one(state), epsilon_);
}

}  // namespace morlbench
