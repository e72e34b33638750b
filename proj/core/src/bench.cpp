#include "morlbench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

namespace morlbench {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kKnownAlgorithms = {"bc",     "ddqn",    "cql",
                                                   "c_cpql", "ap_cpql", "peda_dt"};

std::string fmt(double x, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, x);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

std::string pref_label(const PreferenceVector& w) { return fmt(w.w_mortality(), "%.2f"); }

std::string sanitize_note(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

}  // namespace

void BenchConfig::validate() const {
  env.validate();
  if (episodes < 2) throw ValidationError("config: episodes must be >= 2");
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw ValidationError("config: test_fraction must be in (0, 1)");
  }
  if (!(gamma > 0.0) || gamma > 1.0) throw ValidationError("config: gamma must be in (0, 1]");
  if (!(sweep_step > 0.0) || sweep_step > 1.0) {
    throw ValidationError("config: sweep_step must be in (0, 1]");
  }
  if (algorithms.empty()) throw ValidationError("config: need at least one algorithm");
  for (const auto& a : algorithms) {
    if (std::find(kKnownAlgorithms.begin(), kKnownAlgorithms.end(), a) ==
        kKnownAlgorithms.end()) {
      throw ValidationError("config: unknown algorithm '" + a + "'");
    }
  }
  if (metrics.empty()) throw ValidationError("config: need at least one metric");
  for (const auto& m : metrics) {
    if (m != "wis" && m != "fqe" && m != "oracle") {
      throw ValidationError("config: unknown metric '" + m + "'");
    }
  }
  if (bootstrap_b < 100) throw ValidationError("config: bootstrap_b must be >= 100");
}

std::string BenchConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["out"] = out_dir;
  kv["episodes"] = std::to_string(episodes);
  kv["test_fraction"] = fmt(test_fraction);
  kv["gamma"] = fmt(gamma);
  kv["sweep_step"] = fmt(sweep_step);
  kv["algorithms"] = join_list(algorithms);
  kv["metrics"] = join_list(metrics);
  kv["bootstrap_b"] = std::to_string(bootstrap_b);
  kv["behavior_epsilon"] = fmt(behavior_epsilon);
  kv["eval_epsilon"] = fmt(eval_epsilon);
  kv["target_rtg_scale"] = fmt(target_rtg_scale);
  kv["env.d"] = std::to_string(env.state_dim);
  kv["env.a"] = std::to_string(env.num_actions);
  kv["env.t_max"] = std::to_string(env.t_max);
  kv["env.severity_drift"] = fmt(env.severity_drift);
  kv["env.treatment_effect"] = fmt(env.treatment_effect);
  kv["env.noise_std"] = fmt(env.noise_std);
  kv["env.seed"] = std::to_string(env.seed);
  kv["bc.epochs"] = std::to_string(bc.epochs);
  kv["bc.batch"] = std::to_string(bc.batch_size);
  kv["q.iterations"] = std::to_string(q_iterations);
  kv["q.batch"] = std::to_string(q_batch);
  kv["q.alpha"] = fmt(q_alpha);
  kv["q.sync"] = std::to_string(q_sync);
  kv["cpql.iterations"] = std::to_string(cpql_iterations);
  kv["cpql.alpha"] = fmt(cpql_alpha);
  kv["dt.epochs"] = std::to_string(dt_epochs);
  kv["dt.context_length"] = std::to_string(dt.context_length);
  kv["dt.embed_dim"] = std::to_string(dt.embed_dim);
  kv["dt.num_layers"] = std::to_string(dt.num_layers);
  kv["dt.num_heads"] = std::to_string(dt.num_heads);
  kv["dt.batch"] = std::to_string(dt.batch_size);
  kv["dt.lr"] = fmt(dt.lr);
  kv["ope.p_min"] = fmt(ope_p_min);
  kv["ope.rho_clip"] = fmt(ope_rho_clip);
  kv["ope.fqe_iterations"] = std::to_string(fqe_iterations);
  kv["ope.fqe_regression_epochs"] = std::to_string(fqe_regression_epochs);
  kv["ope.fqe_batch"] = std::to_string(fqe_batch);
  kv["ope.behavior_epochs"] = std::to_string(behavior_epochs);
  kv["ope.behavior_lr"] = fmt(behavior_lr);
  kv["oracle.rollouts"] = std::to_string(oracle_rollouts);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

BenchConfig parse_config_text(const std::string& text, const std::string& origin) {
  BenchConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "out") cfg.out_dir = value;
      else if (key == "episodes") cfg.episodes = std::stoi(value);
      else if (key == "test_fraction") cfg.test_fraction = std::stod(value);
      else if (key == "gamma") cfg.gamma = std::stod(value);
      else if (key == "sweep_step") cfg.sweep_step = std::stod(value);
      else if (key == "algorithms") cfg.algorithms = split_list(value);
      else if (key == "metrics") cfg.metrics = split_list(value);
      else if (key == "bootstrap_b") cfg.bootstrap_b = std::stoi(value);
      else if (key == "behavior_epsilon") cfg.behavior_epsilon = std::stod(value);
      else if (key == "eval_epsilon") cfg.eval_epsilon = std::stod(value);
      else if (key == "target_rtg_scale") cfg.target_rtg_scale = std::stod(value);
      else if (key == "env.d") cfg.env.state_dim = std::stoi(value);
      else if (key == "env.a") cfg.env.num_actions = std::stoi(value);
      else if (key == "env.t_max") cfg.env.t_max = std::stoi(value);
      else if (key == "env.severity_drift") cfg.env.severity_drift = std::stod(value);
      else if (key == "env.treatment_effect") cfg.env.treatment_effect = std::stod(value);
      else if (key == "env.noise_std") cfg.env.noise_std = std::stod(value);
      else if (key == "env.seed") cfg.env.seed = std::stoull(value);
      else if (key == "bc.epochs") cfg.bc.epochs = std::stoi(value);
      else if (key == "bc.batch") cfg.bc.batch_size = std::stoi(value);
      else if (key == "q.iterations") cfg.q_iterations = std::stoi(value);
      else if (key == "q.batch") cfg.q_batch = std::stoi(value);
      else if (key == "q.alpha") cfg.q_alpha = std::stod(value);
      else if (key == "q.sync") cfg.q_sync = std::stoi(value);
      else if (key == "cpql.iterations") cfg.cpql_iterations = std::stoi(value);
      else if (key == "cpql.alpha") cfg.cpql_alpha = std::stod(value);
      else if (key == "dt.epochs") cfg.dt_epochs = std::stoi(value);
      else if (key == "dt.context_length") cfg.dt.context_length = std::stoi(value);
      else if (key == "dt.embed_dim") cfg.dt.embed_dim = std::stoi(value);
      else if (key == "dt.num_layers") cfg.dt.num_layers = std::stoi(value);
      else if (key == "dt.num_heads") cfg.dt.num_heads = std::stoi(value);
      else if (key == "dt.batch") cfg.dt.batch_size = std::stoi(value);
      else if (key == "dt.lr") cfg.dt.lr = std::stod(value);
      else if (key == "ope.p_min") cfg.ope_p_min = std::stod(value);
      else if (key == "ope.rho_clip") cfg.ope_rho_clip = std::stod(value);
      else if (key == "ope.fqe_iterations") cfg.fqe_iterations = std::stoi(value);
      else if (key == "ope.fqe_regression_epochs") cfg.fqe_regression_epochs = std::stoi(value);
      else if (key == "ope.fqe_batch") cfg.fqe_batch = std::stoi(value);
      else if (key == "ope.behavior_epochs") cfg.behavior_epochs = std::stoi(value);
      else if (key == "ope.behavior_lr") cfg.behavior_lr = std::stod(value);
      else if (key == "oracle.rollouts") cfg.oracle_rollouts = std::stoi(value);
      else throw ParseError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

BenchConfig load_config(const std::string& path) {
  if (path.empty()) return BenchConfig{};
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::vector<PreferenceVector> sweep_grid(double step) {
  std::vector<PreferenceVector> grid;
  const int n = static_cast<int>(std::llround(1.0 / step));
  for (int i = 0; i <= n; ++i) {
    const double w = std::min(1.0, i * step);
    grid.emplace_back(w, 1.0 - w);
  }
  return grid;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("write_results_csv: cannot open " + path);
  out << "w_mortality,w_los,algorithm,metric,value,ci_lower,ci_upper,ci_width,seed,status,note\n";
  for (const ResultRow& r : rows) {
    out << fmt(r.preference.w_mortality()) << ',' << fmt(r.preference.w_los()) << ','
        << r.algorithm << ',' << r.metric << ',';
    if (r.ok) {
      out << fmt(r.value) << ',' << fmt(r.ci_lower) << ',' << fmt(r.ci_upper) << ','
          << fmt(r.ci_width);
    } else {
      out << "NA,NA,NA,NA";
    }
    out << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << sanitize_note(r.note)
        << '\n';
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("read_results_csv: cannot open " + path);
  std::vector<ResultRow> rows;
  std::string line;
  std::getline(in, line);  // header
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() < 10) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": short row");
    }
    ResultRow r;
    r.preference = PreferenceVector(std::stod(fields[0]), std::stod(fields[1]));
    r.algorithm = fields[2];
    r.metric = fields[3];
    r.ok = fields[9] == "ok";
    if (r.ok) {
      r.value = std::stod(fields[4]);
      r.ci_lower = std::stod(fields[5]);
      r.ci_upper = std::stod(fields[6]);
      r.ci_width = std::stod(fields[7]);
    }
    r.seed = std::stoull(fields[8]);
    if (fields.size() > 10) r.note = fields[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string emit_table(const std::vector<ResultRow>& rows, const std::string& metric,
                       const std::vector<std::string>& algorithms) {
  // Collect the preference axis in ascending w_mortality order.
  std::vector<PreferenceVector> prefs;
  for (const ResultRow& r : rows) {
    if (r.metric != metric) continue;
    bool seen = false;
    for (const auto& p : prefs) {
      if (pref_label(p) == pref_label(r.preference)) seen = true;
    }
    if (!seen) prefs.push_back(r.preference);
  }
  std::sort(prefs.begin(), prefs.end(), [](const auto& a, const auto& b) {
    return a.w_mortality() < b.w_mortality();
  });

  std::map<std::string, const ResultRow*> cells;
  for (const ResultRow& r : rows) {
    if (r.metric != metric) continue;
    cells[pref_label(r.preference) + "/" + r.algorithm] = &r;
  }

  std::ostringstream out;
  out << "w_mortality,w_los";
  for (const auto& a : algorithms) out << ',' << a << "_value," << a << "_ci_half_width";
  out << ",best\n";
  for (const auto& p : prefs) {
    out << fmt(p.w_mortality(), "%.2f") << ',' << fmt(p.w_los(), "%.2f");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : algorithms) {
      auto it = cells.find(pref_label(p) + "/" + a);
      if (it != cells.end() && it->second->ok) best = std::max(best, it->second->value);
    }
    std::vector<std::string> best_algs;
    for (const auto& a : algorithms) {
      auto it = cells.find(pref_label(p) + "/" + a);
      if (it == cells.end() || !it->second->ok) {
        std::cerr << "emit_table: missing cell " << metric << " " << p.label() << " " << a
                  << " -> NA\n";
        out << ",NA,NA";
        continue;
      }
      const ResultRow& r = *it->second;
      out << ',' << fmt(r.value, "%.6f") << ',' << fmt(r.ci_width / 2.0, "%.6f");
      if (r.value == best) best_algs.push_back(a);
    }
    out << ',';
    for (size_t i = 0; i < best_algs.size(); ++i) {
      if (i) out << ';';
      out << best_algs[i];
    }
    out << '\n';
  }
  return out.str();
}

std::string emit_plotdata(const std::vector<ResultRow>& rows, const std::string& metric) {
  std::ostringstream out;
  out << "algorithm,x,y,y_lo,y_hi\n";
  std::vector<std::string> algs;
  for (const ResultRow& r : rows) {
    if (r.metric != metric) continue;
    if (std::find(algs.begin(), algs.end(), r.algorithm) == algs.end()) {
      algs.push_back(r.algorithm);
    }
  }
  for (const auto& a : algs) {
    for (const ResultRow& r : rows) {
      if (r.metric != metric || r.algorithm != a || !r.ok) continue;
      out << a << ',' << fmt(r.preference.w_mortality(), "%.2f") << ',' << fmt(r.value, "%.9g")
          << ',' << fmt(r.ci_lower, "%.9g") << ',' << fmt(r.ci_upper, "%.9g") << '\n';
    }
  }
  return out.str();
}

// ---- runner ----

BenchRunner::BenchRunner(BenchConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  fs::create_directories(cfg_.out_dir);
}

std::string BenchRunner::checkpoint_path(const std::string& algorithm) const {
  return cfg_.out_dir + "/checkpoints/" + algorithm + ".ckpt";
}

uint64_t BenchRunner::cell_seed(const std::string& algorithm, const PreferenceVector& w,
                                const std::string& metric) const {
  return Rng(cfg_.seed)
      .derive("cell/" + algorithm + "/" + pref_label(w) + "/" + metric)
      .seed();
}

void BenchRunner::generate() {
  EnvConfig env = cfg_.env;
  if (env.seed == 0) env.seed = Rng(cfg_.seed).derive("env").seed();
  Dataset full = generate_dataset(env, cfg_.episodes, cfg_.behavior_epsilon);
  auto [train, test] =
      split_dataset(full, cfg_.test_fraction, Rng(cfg_.seed).derive("split").seed());
  save_dataset(train, cfg_.out_dir + "/dataset_train.trj");
  save_dataset(test, cfg_.out_dir + "/dataset_test.trj");
  train_ = std::move(train);
  test_ = std::move(test);
}

void BenchRunner::ensure_datasets() {
  if (train_ && test_) return;
  const std::string train_path = cfg_.out_dir + "/dataset_train.trj";
  const std::string test_path = cfg_.out_dir + "/dataset_test.trj";
  if (fs::exists(train_path) && fs::exists(test_path)) {
    train_ = load_dataset(train_path);
    test_ = load_dataset(test_path);
  } else {
    generate();
  }
}

const Dataset& BenchRunner::train_split() {
  ensure_datasets();
  return *train_;
}

const Dataset& BenchRunner::test_split() {
  ensure_datasets();
  return *test_;
}

void BenchRunner::train() {
  ensure_datasets();
  fs::create_directories(cfg_.out_dir + "/checkpoints");
  const Dataset& train_data = *train_;
  Rng root(cfg_.seed);

  for (const std::string& alg : cfg_.algorithms) {
    ParamFile file;
    file.meta["algorithm"] = alg;
    file.meta["gamma"] = fmt(cfg_.gamma);
    if (alg == "bc") {
      BcConfig bc = cfg_.bc;
      bc.seed = root.derive("train/bc").seed();
      BcResult fit = train_bc(train_data, bc);
      file.meta["seed"] = std::to_string(bc.seed);
      fit.net.append_params(file, "net");
      bc_policy_ = std::make_shared<SoftmaxPolicy>(std::move(fit.net));
    } else if (alg == "ddqn" || alg == "cql") {
      QBaselineConfig qc;
      qc.gamma = cfg_.gamma;
      qc.iterations = cfg_.q_iterations;
      qc.batch_size = cfg_.q_batch;
      qc.target_sync_period = cfg_.q_sync;
      qc.alpha = cfg_.q_alpha;
      qc.seed = root.derive("train/" + alg).seed();
      const PreferenceVector w(0.5, 0.5);  // fixed-preference baselines
      QBaselineResult fit = alg == "cql" ? train_cql(train_data, w, qc)
                                         : train_ddqn(train_data, w, qc);
      file.meta["seed"] = std::to_string(qc.seed);
      file.meta["w_mortality"] = fmt(w.w_mortality());
      file.meta["w_los"] = fmt(w.w_los());
      fit.q.append_params(file, "net");
      if (alg == "ddqn") ddqn_q_ = std::move(fit.q);
      else cql_q_ = std::move(fit.q);
    } else if (alg == "c_cpql" || alg == "ap_cpql") {
      CpqlConfig cc;
      cc.variant = alg == "c_cpql" ? Conditioning::kConcat : Conditioning::kPreferenceAttention;
      cc.alpha = cfg_.cpql_alpha;
      cc.gamma = cfg_.gamma;
      cc.iterations = cfg_.cpql_iterations;
      cc.batch_size = cfg_.q_batch;
      cc.target_sync_period = cfg_.q_sync;
      cc.sampler.grid_step = cfg_.sweep_step;
      cc.seed = root.derive("train/" + alg).seed();
      CpqlResult fit = train_cpql(train_data, cc);
      file.meta["seed"] = std::to_string(cc.seed);
      file.meta["sampler"] = sampler_mode_name(fit.sampler_mode);
      fit.model.append_params(file);
      auto model = std::make_shared<VectorQNet>(std::move(fit.model));
      if (alg == "c_cpql") c_cpql_ = std::move(model);
      else ap_cpql_ = std::move(model);
    } else if (alg == "peda_dt") {
      DtConfig dc = cfg_.dt;
      dc.seed = root.derive("train/peda_dt").seed();
      DtTrainResult fit = train_dt(train_data, dc, cfg_.dt_epochs);
      file.meta["seed"] = std::to_string(dc.seed);
      fit.model.append_params(file);
      peda_dt_ = std::make_shared<DecisionTransformer>(std::move(fit.model));
    }
    file.save(checkpoint_path(alg));
  }
}

void BenchRunner::ensure_models(const std::vector<std::string>& algorithms) {
  ensure_datasets();
  std::vector<std::string> missing;
  for (const std::string& alg : algorithms) {
    const bool loaded = (alg == "bc" && bc_policy_) || (alg == "ddqn" && ddqn_q_) ||
                        (alg == "cql" && cql_q_) || (alg == "c_cpql" && c_cpql_) ||
                        (alg == "ap_cpql" && ap_cpql_) || (alg == "peda_dt" && peda_dt_);
    if (loaded) continue;
    const std::string path = checkpoint_path(alg);
    if (!fs::exists(path)) {
      missing.push_back(alg);
      continue;
    }
    ParamFile file = ParamFile::load(path);
    if (alg == "bc") {
      bc_policy_ = std::make_shared<SoftmaxPolicy>(Mlp::from_params(file, "net"));
    } else if (alg == "ddqn") {
      ddqn_q_ = Mlp::from_params(file, "net");
    } else if (alg == "cql") {
      cql_q_ = Mlp::from_params(file, "net");
    } else if (alg == "c_cpql") {
      c_cpql_ = std::make_shared<VectorQNet>(VectorQNet::from_params(file));
    } else if (alg == "ap_cpql") {
      ap_cpql_ = std::make_shared<VectorQNet>(VectorQNet::from_params(file));
    } else if (alg == "peda_dt") {
      peda_dt_ = std::make_shared<DecisionTransformer>(DecisionTransformer::from_params(file));
    }
  }
  if (!missing.empty()) {
    std::cerr << "missing checkpoints for " << join_list(missing) << "; training them now\n";
    std::vector<std::string> keep = cfg_.algorithms;
    cfg_.algorithms = missing;
    train();
    cfg_.algorithms = keep;
  }
}

void BenchRunner::ensure_behavior() {
  if (behavior_) return;
  ensure_datasets();
  BcConfig bc = cfg_.bc;
  bc.epochs = cfg_.behavior_epochs;
  bc.lr = cfg_.behavior_lr;
  behavior_ = fit_behavior(*train_, cfg_.ope_p_min, Rng(cfg_.seed).derive("behavior").seed(), bc);
}

std::unique_ptr<Policy> BenchRunner::make_policy(const std::string& algorithm,
                                                 const PreferenceVector& w) {
  ensure_models({algorithm});
  if (algorithm == "bc") {
    // Already stochastic; shared across every preference.
    return std::make_unique<SoftmaxPolicy>(*bc_policy_);
  }
  if (algorithm == "ddqn") return greedy_policy(*ddqn_q_, cfg_.eval_epsilon);
  if (algorithm == "cql") return greedy_policy(*cql_q_, cfg_.eval_epsilon);
  if (algorithm == "c_cpql") return policy_at(c_cpql_, w, cfg_.eval_epsilon);
  if (algorithm == "ap_cpql") return policy_at(ap_cpql_, w, cfg_.eval_epsilon);
  if (algorithm == "peda_dt") {
    return dt_policy(peda_dt_, w, cfg_.target_rtg_scale, cfg_.eval_epsilon);
  }
  throw UsageError("make_policy: unknown algorithm '" + algorithm + "'");
}

std::vector<ResultRow> BenchRunner::evaluate() {
  ensure_datasets();
  ensure_models(cfg_.algorithms);
  ensure_behavior();
  const Dataset& test = *test_;
  const auto grid = sweep_grid(cfg_.sweep_step);
  EnvConfig env = cfg_.env;
  if (env.seed == 0) env.seed = Rng(cfg_.seed).derive("env").seed();
  SynthIcuEnv oracle_env(env);

  std::vector<ResultRow> rows;
  for (const std::string& alg : cfg_.algorithms) {
    for (const PreferenceVector& w : grid) {
      std::unique_ptr<Policy> policy;
      try {
        policy = make_policy(alg, w);
      } catch (const std::exception& e) {
        for (const std::string& metric : cfg_.metrics) {
          ResultRow r;
          r.preference = w;
          r.algorithm = alg;
          r.metric = metric;
          r.ok = false;
          r.note = e.what();
          r.seed = cell_seed(alg, w, metric);
          rows.push_back(std::move(r));
        }
        continue;
      }
      for (const std::string& metric : cfg_.metrics) {
        ResultRow r;
        r.preference = w;
        r.algorithm = alg;
        r.metric = metric;
        r.seed = cell_seed(alg, w, metric);
        try {
          if (metric == "wis") {
            WisEvaluator eval(*policy, test, *behavior_, w, cfg_.gamma, cfg_.ope_rho_clip);
            if (!cfg_.trace_dir.empty()) {
              fs::create_directories(cfg_.trace_dir);
              write_ratio_trace(eval.trace(), test,
                                cfg_.trace_dir + "/wis_trace_" + alg + "_" + pref_label(w) +
                                    ".txt");
            }
            auto est = bootstrap_ci([&](std::span<const int> idx) { return eval.value_on(idx); },
                                    eval.num_episodes(),
                                    BootstrapConfig{cfg_.bootstrap_b, 0.95, r.seed});
            r.value = est.value;
            r.ci_lower = est.ci_lower;
            r.ci_upper = est.ci_upper;
          } else if (metric == "fqe") {
            FqeConfig fc;
            fc.iterations = cfg_.fqe_iterations;
            fc.regression_epochs = cfg_.fqe_regression_epochs;
            fc.batch_size = cfg_.fqe_batch;
            fc.seed = r.seed;
            FqeResult fit = fqe(*policy, test, w, cfg_.gamma, fc);
            // The CI resamples the initial-state average with the fitted Q
            // held fixed; refitting per resample is beyond desk scale.
            const auto& v1 = fit.initial_state_values;
            auto est = bootstrap_ci(
                [&](std::span<const int> idx) {
                  double acc = 0.0;
                  for (int e : idx) acc += v1[e];
                  return acc / static_cast<double>(idx.size());
                },
                static_cast<int>(v1.size()), BootstrapConfig{cfg_.bootstrap_b, 0.95, r.seed});
            r.value = est.value;
            r.ci_lower = est.ci_lower;
            r.ci_upper = est.ci_upper;
          } else if (metric == "oracle") {
            OracleValue ov = true_policy_value(oracle_env, *policy, test.stats, w, cfg_.gamma,
                                               cfg_.oracle_rollouts,
                                               Rng(cfg_.seed).derive("oracle").seed());
            r.value = ov.mean;
            r.ci_lower = ov.mean - 1.96 * ov.std_error;
            r.ci_upper = ov.mean + 1.96 * ov.std_error;
          }
          r.ci_width = r.ci_upper - r.ci_lower;
        } catch (const std::exception& e) {
          r.ok = false;
          r.note = e.what();
          std::cerr << "cell failed: " << alg << " " << w.label() << " " << metric << ": "
                    << e.what() << "\n";
        }
        rows.push_back(std::move(r));
      }
    }
  }
  write_results_csv(rows, cfg_.out_dir + "/results.csv");
  write_manifest();
  return rows;
}

void BenchRunner::report() {
  const auto rows = read_results_csv(cfg_.out_dir + "/results.csv");
  for (const std::string& metric : cfg_.metrics) {
    if (metric == "oracle") continue;
    std::ofstream table(cfg_.out_dir + "/table_" + metric + ".csv");
    table << emit_table(rows, metric, cfg_.algorithms);
    std::ofstream plot(cfg_.out_dir + "/plot_" + metric + ".csv");
    plot << emit_plotdata(rows, metric);
  }
}

void BenchRunner::calibrate() {
  ensure_datasets();
  ensure_models(cfg_.algorithms);
  const std::string results_path = cfg_.out_dir + "/results.csv";
  std::vector<ResultRow> rows;
  if (fs::exists(results_path)) {
    rows = read_results_csv(results_path);
  } else {
    rows = evaluate();
  }
  EnvConfig env = cfg_.env;
  if (env.seed == 0) env.seed = Rng(cfg_.seed).derive("env").seed();
  SynthIcuEnv oracle_env(env);
  const auto grid = sweep_grid(cfg_.sweep_step);
  const uint64_t oracle_seed = Rng(cfg_.seed).derive("oracle").seed();

  std::map<std::string, const ResultRow*> cells;
  for (const ResultRow& r : rows) {
    cells[r.algorithm + "/" + pref_label(r.preference) + "/" + r.metric] = &r;
  }

  std::ostringstream out;
  out << "algorithm,w_mortality,w_los,metric,ope_value,oracle_value,abs_error\n";
  std::map<std::string, std::pair<double, int>> summary;
  for (const std::string& alg : cfg_.algorithms) {
    for (const PreferenceVector& w : grid) {
      auto policy = make_policy(alg, w);
      const OracleValue truth = true_policy_value(oracle_env, *policy, test_->stats, w,
                                                  cfg_.gamma, cfg_.oracle_rollouts, oracle_seed);
      for (const std::string& metric : cfg_.metrics) {
        double ope_value;
        if (metric == "oracle") {
          ope_value = truth.mean;  // self-check row: error is exactly zero
        } else {
          auto it = cells.find(alg + "/" + pref_label(w) + "/" + metric);
          if (it == cells.end() || !it->second->ok) {
            std::cerr << "calibrate: missing OPE cell " << alg << " " << w.label() << " "
                      << metric << "\n";
            out << alg << ',' << fmt(w.w_mortality(), "%.2f") << ',' << fmt(w.w_los(), "%.2f")
                << ',' << metric << ",NA," << fmt(truth.mean) << ",NA\n";
            continue;
          }
          ope_value = it->second->value;
        }
        const double err = std::abs(ope_value - truth.mean);
        out << alg << ',' << fmt(w.w_mortality(), "%.2f") << ',' << fmt(w.w_los(), "%.2f") << ','
            << metric << ',' << fmt(ope_value) << ',' << fmt(truth.mean) << ',' << fmt(err)
            << '\n';
        auto& s = summary[metric];
        s.first += err;
        s.second += 1;
      }
    }
  }
  for (const auto& [metric, s] : summary) {
    out << "summary,,," << metric << ",,," << fmt(s.second ? s.first / s.second : 0.0) << '\n';
  }
  std::ofstream file(cfg_.out_dir + "/calibration.csv");
  file << out.str();
}

void BenchRunner::write_manifest() const {
  std::ofstream out(cfg_.out_dir + "/manifest");
  const std::string canonical = cfg_.canonical_text();
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  out << "config_hash=" << hash << "\n";
  out << "master_seed=" << cfg_.seed << "\n";
  Rng root(cfg_.seed);
  out << "env_seed=" << (cfg_.env.seed != 0 ? cfg_.env.seed : root.derive("env").seed()) << "\n";
  out << "split_seed=" << root.derive("split").seed() << "\n";
  out << "behavior_seed=" << root.derive("behavior").seed() << "\n";
  for (const std::string& alg : cfg_.algorithms) {
    out << "train_seed/" << alg << "=" << root.derive("train/" + alg).seed() << "\n";
  }
  for (const std::string& alg : cfg_.algorithms) {
    for (const PreferenceVector& w : sweep_grid(cfg_.sweep_step)) {
      for (const std::string& metric : cfg_.metrics) {
        out << "cell_seed/" << alg << "/" << pref_label(w) << "/" << metric << "="
            << cell_seed(alg, w, metric) << "\n";
      }
    }
  }
}

int BenchRunner::run_all() {
  generate();
  train();
  const auto rows = evaluate();
  report();
  calibrate();
  int failed = 0;
  for (const ResultRow& r : rows) {
    if (!r.ok) ++failed;
  }
  return failed;
}

}  // namespace morlbench
