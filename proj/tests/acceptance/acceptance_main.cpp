// Acceptance suite: one checkable criterion per function, one [PASS]/[FAIL]
// line per criterion on stdout, nonzero exit if anything failed.
//
// Run everything:            ./acceptance
// Run a single criterion:    ./acceptance --criterion 4

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "morlbench/bench.hpp"
#include "morlbench/pareto.hpp"
#include "test_util.hpp"

using namespace morlbench;
namespace fs = std::filesystem;

namespace {

class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok_ = false;
      notes_.push_back(what);
    }
  }
  void note(const std::string& s) { std::cerr << "    " << s << "\n"; }
  bool ok() const { return ok_; }
  const std::vector<std::string>& failures() const { return notes_; }

 private:
  bool ok_ = true;
  std::vector<std::string> notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

EnvConfig default_env(uint64_t seed) {
  EnvConfig cfg;
  cfg.seed = seed;
  return cfg;
}

double empirical_mean_return(const Dataset& d, const PreferenceVector& w, double gamma) {
  double acc = 0.0;
  for (const auto& traj : d.trajectories) acc += scalarize(discounted_return(traj, gamma), w);
  return acc / d.num_episodes();
}

const std::vector<PreferenceVector> kCornerPrefs = {
    PreferenceVector(0.0, 1.0), PreferenceVector(0.5, 0.5), PreferenceVector(1.0, 0.0)};

// ---- criterion 1 ------------------------------------------------------

bool criterion_1(Checker& c) {
  Dataset d = generate_dataset(default_env(101101), 2000);
  BcConfig bc;
  bc.epochs = 8;
  BehaviorModel behavior = fit_behavior(d, 1e-3, 42, bc);

  const auto t0 = std::chrono::steady_clock::now();
  for (double gamma : {0.9, 0.99, 1.0}) {
    for (const auto& w : kCornerPrefs) {
      WisResult res = wis(behavior, d, behavior, w, gamma, 20.0);
      const double empirical = empirical_mean_return(d, w, gamma);
      const double diff = std::abs(res.value - empirical);
      c.expect(diff <= 1e-9, "identity off by " + fmt(diff) + " at gamma " + fmt(gamma) +
                                 " w " + w.label());
    }
  }
  const double elapsed = seconds_since(t0);
  c.note("9 identity evaluations on N=2000 took " + fmt(elapsed) + " s");
  c.expect(elapsed < 10.0, "runtime " + fmt(elapsed) + " s exceeded 10 s");
  return c.ok();
}

// ---- criterion 2 ------------------------------------------------------

bool criterion_2(Checker& c) {
  // Two one-step episodes, dyadic probabilities so the ratios are exactly
  // {2, 0.5} and the returns {1, 0}.
  Dataset d;
  d.num_actions = 2;
  d.feature_names = {"which"};
  d.stats.mean = {0.0};
  d.stats.stddev = {1.0};
  for (int e = 0; e < 2; ++e) {
    Trajectory traj;
    traj.id = e == 0 ? "hi" : "lo";
    Transition tr;
    tr.state = {e == 0 ? 1.0 : -1.0};
    tr.action = 0;
    tr.reward = {e == 0 ? 1.0 : 0.0, 0.0};
    tr.done = true;
    tr.t = 1;
    traj.transitions.push_back(tr);
    d.trajectories.push_back(traj);
  }
  auto base = std::make_shared<FunctionPolicy>(2, [](std::span<const double> s) {
    return s[0] > 0 ? std::vector<double>{0.25, 0.75} : std::vector<double>{0.75, 0.25};
  });
  BehaviorModel behavior(base, 0.25);  // floored rows: (0.375, 0.625) / (0.625, 0.375)
  FunctionPolicy policy(2, [](std::span<const double> s) {
    return s[0] > 0 ? std::vector<double>{0.75, 0.25} : std::vector<double>{0.3125, 0.6875};
  });
  WisResult res = wis(policy, d, behavior, PreferenceVector(1.0, 0.0), 0.9, 0.0);
  c.expect(res.trace.step_ratio[0][0] == 2.0, "first ratio != 2");
  c.expect(res.trace.step_ratio[1][0] == 0.5, "second ratio != 0.5");
  c.expect(res.value == 0.8, "estimator returned " + fmt(res.value) + ", expected exactly 0.8");
  return c.ok();
}

// ---- criterion 3 ------------------------------------------------------

bool criterion_3(Checker& c) {
  const auto t0 = std::chrono::steady_clock::now();
  testutil::ChainFixture fx = testutil::make_chain_fixture(40);
  FunctionPolicy policy(2, [&](std::span<const double> s) {
    return s[0] == 1.0 ? std::vector<double>{fx.pi0[0], fx.pi0[1]}
                       : std::vector<double>{fx.pi1[0], fx.pi1[1]};
  });
  const double gamma = 0.9;
  FqeConfig cfg;
  cfg.iterations = 50;
  cfg.regression_epochs = 40;
  cfg.batch_size = 64;
  cfg.seed = 303;
  FqeResult res = fqe(policy, fx.data, PreferenceVector(1.0, 0.0), gamma, cfg);
  const double exact = fx.exact_value(gamma);
  const double err = std::abs(res.value - exact);
  c.note("FQE " + fmt(res.value) + " vs DP " + fmt(exact) + " (err " + fmt(err) + ")");
  c.expect(err <= 0.02, "FQE error " + fmt(err) + " above 0.02");
  const double elapsed = seconds_since(t0);
  c.note("runtime " + fmt(elapsed) + " s");
  c.expect(elapsed < 30.0, "runtime above 30 s");
  return c.ok();
}

// ---- criterion 4 ------------------------------------------------------

bool criterion_4(Checker& c) {
  const auto t0 = std::chrono::steady_clock::now();
  EnvConfig env_cfg = default_env(404404);
  Dataset d = generate_dataset(env_cfg, 2000);
  SynthIcuEnv env(env_cfg);
  const double gamma = 0.99;

  BcConfig bc;
  bc.epochs = 15;
  bc.seed = 1;
  BcResult bc_fit = train_bc(d, bc);
  auto bc_policy = std::make_shared<SoftmaxPolicy>(std::move(bc_fit.net));

  QBaselineConfig qc;
  qc.gamma = gamma;
  qc.alpha = 1.0;
  qc.iterations = 6000;
  qc.seed = 2;
  QBaselineResult cql_fit = train_cql(d, PreferenceVector(0.5, 0.5), qc);
  auto cql_policy = greedy_policy(cql_fit.q, 0.05);

  BcConfig behavior_bc;
  behavior_bc.epochs = 25;
  behavior_bc.lr = 3e-3;
  BehaviorModel behavior = fit_behavior(d, 1e-3, 3, behavior_bc);

  struct Cell {
    const Policy* policy;
    std::string name;
  };
  const std::vector<Cell> cells{{bc_policy.get(), "bc"}, {cql_policy.get(), "cql"}};
  FqeConfig fqe_cfg;
  fqe_cfg.iterations = 50;
  fqe_cfg.regression_epochs = 4;
  for (const auto& cell : cells) {
    for (const auto& w : kCornerPrefs) {
      const OracleValue truth =
          true_policy_value(env, *cell.policy, d.stats, w, gamma, 4000, 909);
      WisResult wis_res = wis(*cell.policy, d, behavior, w, gamma, 20.0);
      const double wis_err = std::abs(wis_res.value - truth.mean);
      c.note(cell.name + " " + w.label() + ": truth " + fmt(truth.mean) + " wis " +
             fmt(wis_res.value) + " (err " + fmt(wis_err) + ")");
      c.expect(wis_err <= 0.10,
               cell.name + " " + w.label() + ": WIS error " + fmt(wis_err) + " above 0.10");
      fqe_cfg.seed = fnv1a64(cell.name + w.label());
      FqeResult fqe_res = fqe(*cell.policy, d, w, gamma, fqe_cfg);
      const double fqe_err = std::abs(fqe_res.value - truth.mean);
      c.note(cell.name + " " + w.label() + ": fqe " + fmt(fqe_res.value) + " (err " +
             fmt(fqe_err) + ")");
      c.expect(fqe_err <= 0.15,
               cell.name + " " + w.label() + ": FQE error " + fmt(fqe_err) + " above 0.15");
    }
  }
  const double elapsed = seconds_since(t0);
  c.note("total runtime " + fmt(elapsed) + " s");
  c.expect(elapsed < 900.0, "runtime above 15 minutes");
  return c.ok();
}

// ---- criterion 5 ------------------------------------------------------

bool criterion_5(Checker& c) {
  // Every backbone shape the learners instantiate, plus random small nets.
  const std::vector<std::vector<int>> learner_shapes{
      {8, 64, 64, 5},    // BC / DDQN / CQL / FQE on the default environment
      {10, 64, 64, 10},  // concat-conditioned CPQL (D+K in, A*K out)
      {8, 64, 64, 10},   // preference-attention backbone
      {3, 64, 64, 2},    // FQE on the chain fixture
      {2, 64},           // gate-sized single layer
  };
  Rng rng(505505);
  int done = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> dims;
    if (trial < static_cast<int>(learner_shapes.size())) {
      dims = learner_shapes[trial];
    } else {
      dims = {2 + rng.uniform_int(6), 4 + rng.uniform_int(12), 1 + rng.uniform_int(6)};
      if (trial % 2 == 0) dims.insert(dims.begin() + 1, 4 + rng.uniform_int(8));
    }
    const Activation act = trial % 2 == 0 ? Activation::kRelu : Activation::kTanh;
    Mlp net(dims, act, rng);
    Matrix x(4, dims.front());
    for (double& v : x.v) v = rng.normal();
    Matrix coeff(4, dims.back());
    for (double& v : coeff.v) v = rng.normal();
    const double rel = testutil::mlp_gradient_check(net, x, coeff);
    worst = std::max(worst, rel);
    c.expect(rel < 1e-4, "net " + std::to_string(trial) + " relative error " + fmt(rel));
    ++done;
  }
  c.note("checked " + std::to_string(done) + " networks, worst relative error " + fmt(worst));
  return c.ok();
}

// ---- criterion 6 ------------------------------------------------------

bool criterion_6(Checker& c) {
  Dataset d = generate_dataset(default_env(606606), 400);
  QBaselineConfig qc;
  qc.iterations = 1500;
  qc.alpha = 1.0;
  qc.seed = 11;
  QBaselineResult cql = train_cql(d, PreferenceVector(0.5, 0.5), qc);
  c.note("min per-batch penalty over the run: " + fmt(cql.min_penalty));
  c.expect(cql.min_penalty >= 0.0, "penalty went negative: " + fmt(cql.min_penalty));

  QBaselineConfig qc0 = qc;
  qc0.iterations = 400;
  QBaselineResult ddqn = train_ddqn(d, PreferenceVector(0.5, 0.5), qc0);
  qc0.alpha = 0.0;
  QBaselineResult cql0 = train_cql(d, PreferenceVector(0.5, 0.5), qc0);
  double max_dev = 0.0;
  for (size_t i = 0; i < ddqn.losses.size(); ++i) {
    max_dev = std::max(max_dev, std::abs(ddqn.losses[i] - cql0.losses[i]));
  }
  c.note("max per-step loss deviation at alpha=0: " + fmt(max_dev));
  c.expect(max_dev < 1e-6, "alpha=0 trajectory deviated by " + fmt(max_dev));
  return c.ok();
}

// ---- criterion 7 ------------------------------------------------------

DtWindow window_fixture(const DtConfig& cfg, int valid_steps, Rng& rng, int pad_left) {
  DtWindow w;
  const int L = cfg.context_length;
  w.length = L;
  w.rtg.assign(L, {0.0, 0.0});
  w.pref.assign(L, {0.0, 0.0});
  w.states = Matrix(L, cfg.state_dim);
  w.actions.assign(L, -1);
  w.step_valid.assign(L, 0);
  w.action_valid.assign(L, 0);
  for (int i = 0; i < valid_steps; ++i) {
    const int slot = pad_left + i;
    w.rtg[slot] = {rng.uniform(), rng.uniform()};
    w.pref[slot] = {0.4, 0.6};
    for (int j = 0; j < cfg.state_dim; ++j) w.states.at(slot, j) = rng.normal();
    w.actions[slot] = rng.uniform_int(cfg.num_actions);
    w.step_valid[slot] = 1;
    w.action_valid[slot] = 1;
  }
  return w;
}

bool criterion_7(Checker& c) {
  DtConfig cfg;
  cfg.context_length = 6;
  cfg.embed_dim = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.state_dim = 4;
  cfg.num_actions = 4;
  cfg.seed = 7;
  Rng rng(707707);
  DecisionTransformer model(cfg, rng);

  // Causality: corrupt everything after step t.
  Rng wrng(1);
  DtWindow w = window_fixture(cfg, 6, wrng, 0);
  const Matrix base = model.forward_window(w);
  bool causal = true;
  for (int t = 0; t < 5; ++t) {
    DtWindow corrupted = w;
    for (int s = t + 1; s < 6; ++s) {
      corrupted.rtg[s] = {1e6, -1e6};
      for (int j = 0; j < cfg.state_dim; ++j) corrupted.states.at(s, j) = -999.0;
      corrupted.actions[s] = (corrupted.actions[s] + 1) % cfg.num_actions;
    }
    const Matrix out = model.forward_window(corrupted);
    for (int s = 0; s <= t; ++s) {
      for (int a = 0; a < cfg.num_actions; ++a) {
        if (out.at(s, a) != base.at(s, a)) causal = false;
      }
    }
  }
  c.expect(causal, "future-token corruption leaked into earlier logits");

  // Padding neutrality: identical steps, swapped padding side.
  DtWindow right = window_fixture(cfg, 3, wrng, 0);
  DtWindow left = window_fixture(cfg, 0, wrng, 0);
  for (int i = 0; i < 3; ++i) {
    left.rtg[3 + i] = right.rtg[i];
    left.pref[3 + i] = right.pref[i];
    for (int j = 0; j < cfg.state_dim; ++j) left.states.at(3 + i, j) = right.states.at(i, j);
    left.actions[3 + i] = right.actions[i];
    left.step_valid[3 + i] = 1;
    left.action_valid[3 + i] = 1;
  }
  const Matrix a = model.forward_window(right);
  const Matrix b = model.forward_window(left);
  bool neutral = model.eval_loss({&right}) == model.eval_loss({&left});
  for (int i = 0; i < 3; ++i) {
    for (int col = 0; col < cfg.num_actions; ++col) {
      if (a.at(i, col) != b.at(3 + i, col)) neutral = false;
    }
  }
  c.expect(neutral, "padding changed logits or loss");

  // RTG suffix-sum consistency on generated data.
  Dataset d = generate_dataset(default_env(707708), 50);
  DtConfig build_cfg = cfg;
  build_cfg.state_dim = d.num_features();
  build_cfg.num_actions = d.num_actions;
  bool consistent = true;
  std::map<std::string, const Trajectory*> by_id;
  for (const auto& traj : d.trajectories) by_id[traj.id] = &traj;
  for (const auto& win : build_sequences(d, build_cfg)) {
    int first_slot = 0;
    while (first_slot < win.length && !win.step_valid[first_slot]) ++first_slot;
    for (int s = first_slot; s + 1 < win.length; ++s) {
      if (!win.step_valid[s + 1]) continue;
      const int idx = (win.first_step - 1) + (s - first_slot);
      const VectorReward& r = by_id.at(win.episode_id)->transitions[idx].reward;
      if (win.rtg[s][0] - win.rtg[s + 1][0] != r.mortality) consistent = false;
      if (win.rtg[s][1] - win.rtg[s + 1][1] != r.los) consistent = false;
    }
  }
  c.expect(consistent, "rtg suffix-sum identity violated");

  // Memorization of a five-episode dataset within 200 epochs.
  Dataset tiny = testutil::tiny_dataset(5, 4, 4, 71);
  DtConfig mem_cfg = cfg;
  mem_cfg.state_dim = 4;
  mem_cfg.num_actions = 4;
  mem_cfg.batch_size = 8;
  mem_cfg.lr = 3e-3;
  DtTrainResult fit = train_dt(tiny, mem_cfg, 200);
  const double acc = fit.model.action_accuracy(build_sequences(tiny, mem_cfg));
  c.note("memorization accuracy " + fmt(acc));
  c.expect(acc > 0.95, "memorization accuracy " + fmt(acc) + " below 0.95");
  return c.ok();
}

// ---- criterion 8 ------------------------------------------------------

bool criterion_8(Checker& c) {
  Rng rng(808808);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + rng.uniform_int(1000);
    std::vector<std::vector<double>> pts(n);
    for (auto& p : pts) {
      if (trial % 3 == 0) {
        p = {rng.uniform_int(20) / 19.0, rng.uniform_int(20) / 19.0};  // exact ties likely
      } else {
        p = {rng.uniform(), rng.uniform()};
      }
    }
    const auto got = nondominated_indices(pts);
    const auto want = testutil::brute_force_nondominated(pts);
    if (got != want) {
      c.expect(false, "mismatch on trial " + std::to_string(trial) + " (n=" +
                          std::to_string(n) + ")");
      return c.ok();
    }
  }
  c.note("100 instances up to n=1000 match the brute-force filter exactly");
  return c.ok();
}

// ---- criterion 9 ------------------------------------------------------

bool criterion_9(Checker& c) {
  const auto t0 = std::chrono::steady_clock::now();
  EnvConfig env_cfg = default_env(909909);
  Dataset d = generate_dataset(env_cfg, 2000);
  SynthIcuEnv env(env_cfg);
  const double gamma = 0.99;
  const PreferenceVector mortality_first(1.0, 0.0);
  const PreferenceVector los_first(0.0, 1.0);
  const uint64_t crn_seed = 99991;  // shared rollouts: same noise for every policy
  const int rollouts = 4000;

  QBaselineConfig qc;
  qc.gamma = gamma;
  qc.iterations = 6000;
  qc.seed = 21;
  QBaselineResult ddqn = train_ddqn(d, PreferenceVector(0.5, 0.5), qc);
  auto ddqn_policy = greedy_policy(ddqn.q, 0.05);
  const double ddqn_mort =
      true_policy_value(env, *ddqn_policy, d.stats, mortality_first, gamma, rollouts, crn_seed)
          .mean;
  const double ddqn_los =
      true_policy_value(env, *ddqn_policy, d.stats, los_first, gamma, rollouts, crn_seed).mean;
  c.note("ddqn[0.5,0.5]: mortality objective " + fmt(ddqn_mort) + ", los objective " +
         fmt(ddqn_los));

  auto evaluate_morl = [&](const std::string& name,
                           const std::function<std::unique_ptr<Policy>(const PreferenceVector&)>&
                               at) {
    const double mort =
        true_policy_value(env, *at(mortality_first), d.stats, mortality_first, gamma, rollouts,
                          crn_seed)
            .mean;
    const double los =
        true_policy_value(env, *at(los_first), d.stats, los_first, gamma, rollouts, crn_seed)
            .mean;
    c.note(name + ": mortality objective " + fmt(mort) + " (ddqn " + fmt(ddqn_mort) +
           "), los objective " + fmt(los) + " (ddqn " + fmt(ddqn_los) + ")");
    return std::make_pair(mort >= ddqn_mort, los >= ddqn_los);
  };

  CpqlConfig cc;
  cc.variant = Conditioning::kConcat;
  cc.gamma = gamma;
  cc.iterations = 8000;
  cc.seed = 22;
  CpqlResult cpql = train_cpql(d, cc);
  auto cpql_model = std::make_shared<VectorQNet>(std::move(cpql.model));
  const auto cpql_pass = evaluate_morl("c_cpql", [&](const PreferenceVector& w) {
    return policy_at(cpql_model, w, 0.05);
  });

  DtConfig dc;
  dc.seed = 23;
  DtTrainResult dt = train_dt(d, dc, 20);
  auto dt_model = std::make_shared<DecisionTransformer>(std::move(dt.model));
  const auto dt_pass = evaluate_morl("peda_dt", [&](const PreferenceVector& w) {
    return dt_policy(dt_model, w, 1.0, 0.05);
  });

  const bool cpql_both = cpql_pass.first && cpql_pass.second;
  const bool dt_both = dt_pass.first && dt_pass.second;
  c.expect(cpql_both || dt_both,
           "neither c_cpql nor peda_dt matched the fixed baseline on both corners");
  const double elapsed = seconds_since(t0);
  c.note("runtime " + fmt(elapsed) + " s");
  c.expect(elapsed < 1800.0, "runtime above 30 minutes");
  return c.ok();
}

// ---- criterion 10 -----------------------------------------------------

bool criterion_10(Checker& c) {
  Dataset d = generate_dataset(default_env(101010), 400);
  QBaselineConfig qc;
  qc.iterations = 1200;
  qc.seed = 31;
  QBaselineResult ddqn = train_ddqn(d, PreferenceVector(0.5, 0.5), qc);
  qc.alpha = 1.0;
  QBaselineResult cql = train_cql(d, PreferenceVector(0.5, 0.5), qc);

  const auto grid = sweep_grid(0.1);
  Rng rng(32);
  std::vector<std::vector<double>> probes;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> s(d.num_features());
    for (double& x : s) x = rng.normal();
    probes.push_back(std::move(s));
  }
  for (const Mlp* q : {&ddqn.q, &cql.q}) {
    // Wrap the same checkpoint once per sweep point, exactly as the
    // benchmark driver does, and demand bitwise identical distributions.
    std::vector<std::vector<double>> reference;
    for (const auto& s : probes) reference.push_back(EpsGreedyQPolicy(*q, 0.05).action_probs(s));
    for (const auto& w : grid) {
      (void)w;  // baselines never see the preference
      EpsGreedyQPolicy wrapped(*q, 0.05);
      for (size_t i = 0; i < probes.size(); ++i) {
        const auto probs = wrapped.action_probs(probes[i]);
        if (std::memcmp(probs.data(), reference[i].data(),
                        probs.size() * sizeof(double)) != 0) {
          c.expect(false, "baseline distribution changed across sweep points");
          return c.ok();
        }
      }
    }
  }
  c.note("ddqn and cql action distributions bitwise identical across all 11 sweep points");
  return c.ok();
}

// ---- criterion 11 -----------------------------------------------------

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool criterion_11(Checker& c) {
  BenchConfig cfg;
  cfg.episodes = 150;
  cfg.algorithms = {"bc", "ddqn"};
  cfg.metrics = {"wis", "fqe"};
  cfg.sweep_step = 0.5;
  cfg.bootstrap_b = 100;
  cfg.bc.epochs = 4;
  cfg.q_iterations = 800;
  cfg.fqe_iterations = 20;
  cfg.fqe_regression_epochs = 2;
  cfg.oracle_rollouts = 100;
  cfg.seed = 77;

  const std::string out1 = "/tmp/morlbench_accept_a";
  const std::string out2 = "/tmp/morlbench_accept_b";
  fs::remove_all(out1);
  fs::remove_all(out2);
  BenchConfig cfg1 = cfg;
  cfg1.out_dir = out1;
  BenchConfig cfg2 = cfg;
  cfg2.out_dir = out2;
  const int failed1 = BenchRunner(cfg1).run_all();
  const int failed2 = BenchRunner(cfg2).run_all();
  c.expect(failed1 == 0, "first run had failed cells");
  c.expect(failed2 == 0, "second run had failed cells");
  const std::string a = file_bytes(out1 + "/results.csv");
  const std::string b = file_bytes(out2 + "/results.csv");
  c.expect(!a.empty(), "first results.csv missing or empty");
  c.expect(a == b, "results.csv differs between identical runs");
  c.note("results.csv is byte-identical across two full pipeline runs (" +
         std::to_string(a.size()) + " bytes)");
  fs::remove_all(out1);
  fs::remove_all(out2);
  return c.ok();
}

// ---- criterion 12 -----------------------------------------------------

bool criterion_12(Checker& c) {
  const auto t0 = std::chrono::steady_clock::now();
  EnvConfig env_cfg = default_env(121212);
  SynthIcuEnv env(env_cfg);
  const double gamma = 0.99;
  const PreferenceVector w(0.5, 0.5);
  const double policy_eps = 0.4;

  // Ground truth for the evaluated policy: a softer clinician. The policy
  // is a fixed function of the raw state, so one high-precision estimate
  // serves every replication.
  NormalizationStats identity{std::vector<double>(env_cfg.state_dim, 0.0),
                              std::vector<double>(env_cfg.state_dim, 1.0)};
  ClinicianPolicyAdapter truth_policy(env_cfg, policy_eps, identity);
  const OracleValue truth =
      true_policy_value(env, truth_policy, identity, w, gamma, 20000, 5150);
  c.note("oracle truth " + fmt(truth.mean) + " +- " + fmt(truth.std_error));

  // The replication uses the logging policy's exact probabilities as the
  // behavior model (they are known in simulation), so the study measures
  // the bootstrap's calibration rather than behavior-fit bias. The fitted
  // variant is reported alongside as a diagnostic.
  int covered = 0;
  int covered_fitted = 0;
  const int replications = 100;
  BcConfig bc;
  bc.epochs = 25;
  bc.lr = 3e-3;
  for (int rep = 0; rep < replications; ++rep) {
    EnvConfig rep_cfg = env_cfg;
    rep_cfg.seed = 121300 + rep;
    Dataset d = generate_dataset(rep_cfg, 500);
    BehaviorModel known(std::make_shared<ClinicianPolicyAdapter>(rep_cfg, 0.3, d.stats), 1e-3);
    ClinicianPolicyAdapter policy(rep_cfg, policy_eps, d.stats);
    WisEvaluator eval(policy, d, known, w, gamma, 20.0);
    const auto est =
        bootstrap_ci([&](std::span<const int> idx) { return eval.value_on(idx); },
                     eval.num_episodes(), BootstrapConfig{1000, 0.95, 4400 + rep});
    if (est.ci_lower <= truth.mean && truth.mean <= est.ci_upper) ++covered;

    BehaviorModel fitted = fit_behavior(d, 1e-3, 8800 + rep, bc);
    WisEvaluator eval_fitted(policy, d, fitted, w, gamma, 20.0);
    const auto est_fitted =
        bootstrap_ci([&](std::span<const int> idx) { return eval_fitted.value_on(idx); },
                     eval_fitted.num_episodes(), BootstrapConfig{1000, 0.95, 4400 + rep});
    if (est_fitted.ci_lower <= truth.mean && truth.mean <= est_fitted.ci_upper) {
      ++covered_fitted;
    }
  }
  c.note("coverage with known behavior probabilities " + std::to_string(covered) + "/100");
  c.note("coverage with a fitted behavior model " + std::to_string(covered_fitted) +
         "/100 (diagnostic, not gated)");
  c.expect(covered >= 85, "coverage " + std::to_string(covered) + " below 85/100");
  const double elapsed = seconds_since(t0);
  c.note("runtime " + fmt(elapsed) + " s");
  c.expect(elapsed < 1200.0, "runtime above 20 minutes");
  return c.ok();
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(Checker&)> run;
};

const std::vector<Criterion> kCriteria = {
    {1, "WIS identity on the fitted behavior model", criterion_1},
    {2, "WIS two-episode hand fixture equals 0.8", criterion_2},
    {3, "FQE matches dynamic programming on the chain fixture", criterion_3},
    {4, "oracle calibration of WIS and FQE on synthetic ICU data", criterion_4},
    {5, "backward pass matches central finite differences", criterion_5},
    {6, "CQL conservatism and alpha=0 equivalence to DDQN", criterion_6},
    {7, "decision transformer structural checks and memorization", criterion_7},
    {8, "nondominated filter equals the brute-force oracle", criterion_8},
    {9, "preference-conditioned models match the fixed baseline on both corners", criterion_9},
    {10, "fixed baselines are bitwise flat across the sweep", criterion_10},
    {11, "full pipeline is byte-deterministic", criterion_11},
    {12, "bootstrap coverage of the oracle truth", criterion_12},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
      ++i;
    } else if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& cr : kCriteria) {
        std::cout << cr.id << ": " << cr.name << "\n";
      }
      return 0;
    }
  }
  int failures = 0;
  for (const auto& cr : kCriteria) {
    if (only != 0 && cr.id != only) continue;
    Checker checker;
    bool ok = false;
    try {
      ok = cr.run(checker);
    } catch (const std::exception& e) {
      checker.expect(false, std::string("exception: ") + e.what());
    }
    ok = ok && checker.ok();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << cr.id << ": " << cr.name
              << "\n";
    for (const auto& note : checker.failures()) {
      std::cout << "       - " << note << "\n";
    }
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
