#include <benchmark/benchmark.h>

#include "morlbench/decision_transformer.hpp"
#include "morlbench/ope.hpp"
#include "morlbench/q_learning.hpp"
#include "morlbench/synth_icu.hpp"

using namespace morlbench;

namespace {

Dataset& shared_dataset() {
  static Dataset d = [] {
    EnvConfig cfg;
    cfg.seed = 1234;
    return generate_dataset(cfg, 400);
  }();
  return d;
}

void BM_MlpForwardBatch(benchmark::State& state) {
  Rng rng(1);
  Mlp net({8, 64, 64, 5}, Activation::kRelu, rng);
  Matrix x(static_cast<int>(state.range(0)), 8);
  for (double& v : x.v) v = rng.normal();
  for (auto _ : state) {
    Matrix out = net.forward(x);
    benchmark::DoNotOptimize(out.v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBatch)->Arg(64)->Arg(256);

void BM_MlpTrainStep(benchmark::State& state) {
  Rng rng(2);
  Mlp net({8, 64, 64, 5}, Activation::kRelu, rng);
  AdamState adam;
  Matrix x(256, 8);
  Matrix dout(256, 5);
  for (double& v : x.v) v = rng.normal();
  for (double& v : dout.v) v = rng.normal();
  for (auto _ : state) {
    MlpCache cache;
    net.forward(x, &cache);
    MlpGrads grads = net.backward(cache, dout);
    auto params = net.param_views();
    auto gviews = net.grad_views(grads);
    adam.step(params, gviews);
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpTrainStep);

void BM_EnvRollout(benchmark::State& state) {
  EnvConfig cfg;
  SynthIcuEnv env(cfg);
  ClinicianPolicy clinician{0.3};
  Rng rng(3);
  int64_t steps = 0;
  for (auto _ : state) {
    EnvState s = env.reset(rng);
    bool done = false;
    while (!done) {
      StepResult res = env.step(s, clinician.sample(env, s, rng), rng);
      done = res.done;
      s = std::move(res.next);
      ++steps;
    }
  }
  state.SetItemsProcessed(steps);
}
BENCHMARK(BM_EnvRollout);

void BM_QLearnerStep(benchmark::State& state) {
  const Dataset& d = shared_dataset();
  const FlatTransitions flat = FlatTransitions::from(d);
  QLearnConfig cfg;
  cfg.alpha = 1.0;
  cfg.seed = 4;
  QLearner learner(flat, scalarized_rewards(flat, PreferenceVector(0.5, 0.5)), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(learner.step());
  }
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(BM_QLearnerStep);

void BM_WisResample(benchmark::State& state) {
  const Dataset& d = shared_dataset();
  BcConfig bc;
  bc.epochs = 4;
  BehaviorModel behavior = fit_behavior(d, 1e-3, 5, bc);
  WisEvaluator eval(behavior, d, behavior, PreferenceVector(0.5, 0.5), 0.99, 20.0);
  Rng rng(6);
  std::vector<int> idx(d.num_episodes());
  for (auto _ : state) {
    for (int& i : idx) i = rng.uniform_int(d.num_episodes());
    benchmark::DoNotOptimize(eval.value_on(idx));
  }
  state.SetItemsProcessed(state.iterations() * d.num_episodes());
}
BENCHMARK(BM_WisResample);

void BM_DtWindowForward(benchmark::State& state) {
  const Dataset& d = shared_dataset();
  DtConfig cfg;
  cfg.state_dim = d.num_features();
  cfg.num_actions = d.num_actions;
  cfg.seed = 7;
  Rng rng(8);
  DecisionTransformer model(cfg, rng);
  const auto windows = build_sequences(d, cfg);
  size_t next = 0;
  for (auto _ : state) {
    Matrix out = model.forward_window(windows[next++ % windows.size()]);
    benchmark::DoNotOptimize(out.v.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DtWindowForward);

}  // namespace

BENCHMARK_MAIN();
