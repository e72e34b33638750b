#include "morlbench/baselines.hpp"

#include <numeric>

namespace morlbench {

BcResult train_bc(const Dataset& train, const BcConfig& cfg) {
  validate(train);
  const FlatTransitions data = FlatTransitions::from(train);
  const int n = data.size();
  Rng rng(cfg.seed);

  std::vector<int> dims;
  dims.push_back(data.state_dim);
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(data.num_actions);
  Mlp net(dims, cfg.activation, rng);
  AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  BcResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      Matrix x(b, data.state_dim);
      for (int i = 0; i < b; ++i) {
        auto s = data.state(order[start + i]);
        std::copy(s.begin(), s.end(), x.row(i).begin());
      }
      MlpCache cache;
      Matrix logits = net.forward(x, &cache);
      Matrix dout(b, data.num_actions);
      double loss = 0.0;
      for (int i = 0; i < b; ++i) {
        const int target = data.actions[order[start + i]];
        auto [l, grad] = softmax_cross_entropy(logits.row(i), target);
        loss += l;
        for (int j = 0; j < data.num_actions; ++j) dout.row(i)[j] = grad[j] / b;
      }
      loss /= b;
      MlpGrads grads = net.backward(cache, dout);
      auto params = net.param_views();
      auto gviews = net.grad_views(grads);
      adam.step(params, gviews);
      epoch_loss += loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_loss / batches);
  }
  result.net = std::move(net);
  return result;
}

std::vector<double> scalarized_rewards(const FlatTransitions& data, const PreferenceVector& w) {
  std::vector<double> r(data.size());
  for (int i = 0; i < data.size(); ++i) r[i] = scalarize(data.rewards[i], w);
  return r;
}

namespace {

QBaselineResult train_q_family(const Dataset& train, const PreferenceVector& w, double alpha,
                               const QBaselineConfig& cfg) {
  validate(train);
  const FlatTransitions data = FlatTransitions::from(train);
  QLearnConfig qcfg;
  qcfg.conditioning = Conditioning::kNone;
  qcfg.num_objectives = 1;
  qcfg.hidden = cfg.hidden;
  qcfg.gamma = cfg.gamma;
  qcfg.alpha = alpha;
  qcfg.lr = cfg.lr;
  qcfg.iterations = cfg.iterations;
  qcfg.batch_size = cfg.batch_size;
  qcfg.target_sync_period = cfg.target_sync_period;
  qcfg.seed = cfg.seed;
  QLearner learner(data, scalarized_rewards(data, w), qcfg);
  learner.run();
  QBaselineResult result;
  result.q = learner.net().backbone();
  result.losses = learner.losses();
  result.sync_count = learner.sync_count();
  result.min_penalty = alpha > 0.0 ? learner.min_penalty() : 0.0;
  return result;
}

}  // namespace

QBaselineResult train_ddqn(const Dataset& train, const PreferenceVector& w,
                           const QBaselineConfig& cfg) {
  return train_q_family(train, w, 0.0, cfg);
}

QBaselineResult train_cql(const Dataset& train, const PreferenceVector& w,
                          const QBaselineConfig& cfg) {
  if (cfg.alpha < 0.0) throw UsageError("train_cql: alpha must be >= 0");
  return train_q_family(train, w, cfg.alpha, cfg);
}

std::unique_ptr<Policy> greedy_policy(Mlp q, double epsilon) {
  return std::make_unique<EpsGreedyQPolicy>(std::move(q), epsilon);
}

}  // namespace morlbench
