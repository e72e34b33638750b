#pragma once

#include <map>
#include <optional>

#include "morlbench/baselines.hpp"
#include "morlbench/cpql.hpp"
#include "morlbench/decision_transformer.hpp"
#include "morlbench/ope.hpp"
#include "morlbench/synth_icu.hpp"

namespace morlbench {

struct BenchConfig {
  uint64_t seed = 1;
  std::string out_dir = "runs/bench";
  int episodes = 2000;
  double test_fraction = 0.2;
  double gamma = 0.99;
  double sweep_step = 0.1;
  std::vector<std::string> algorithms = {"bc", "ddqn", "cql", "c_cpql", "ap_cpql", "peda_dt"};
  std::vector<std::string> metrics = {"wis", "fqe"};
  int bootstrap_b = 1000;
  double behavior_epsilon = 0.3;
  double eval_epsilon = 0.05;  // stochasticity wrapper for greedy policies
  double target_rtg_scale = 1.0;

  EnvConfig env;
  BcConfig bc;
  int q_iterations = 6000;
  int q_batch = 256;
  double q_alpha = 1.0;
  int q_sync = 500;
  int cpql_iterations = 8000;
  double cpql_alpha = 1.0;
  int dt_epochs = 20;
  DtConfig dt;

  double ope_p_min = 1e-3;
  double ope_rho_clip = 20.0;
  int fqe_iterations = 50;
  int fqe_regression_epochs = 8;
  int fqe_batch = 128;
  int behavior_epochs = 25;
  double behavior_lr = 3e-3;
  int oracle_rollouts = 2000;
  std::string trace_dir;  // when set, per-cell WIS ratio traces are dumped

  /// Canonical key=value text (sorted keys) used for the manifest hash.
  std::string canonical_text() const;
  void validate() const;
};

/// Flat key=value config file; '#' starts a comment. Unknown keys are
/// rejected. Missing file -> defaults.
BenchConfig load_config(const std::string& path);
BenchConfig parse_config_text(const std::string& text, const std::string& origin);

/// Preferences [0, 1], [step, 1-step], ..., [1, 0].
std::vector<PreferenceVector> sweep_grid(double step);

struct ResultRow {
  PreferenceVector preference;
  std::string algorithm;
  std::string metric;
  double value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double ci_width = 0.0;
  uint64_t seed = 0;
  bool ok = true;
  std::string note;
};

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);

/// Table with one row per preference and one (value, ci half-width) column
/// pair per algorithm, plus a `best` column marking the per-row maxima
/// (ties all marked). Missing cells render as NA with a warning on stderr.
std::string emit_table(const std::vector<ResultRow>& rows, const std::string& metric,
                       const std::vector<std::string>& algorithms);

/// Long-format series per algorithm: x = w_mortality, y = value with
/// bootstrap bounds.
std::string emit_plotdata(const std::vector<ResultRow>& rows, const std::string& metric);

/// Orchestrates generate -> train -> evaluate -> report -> calibrate over
/// one output directory. Verbs can run standalone; each reloads whatever
/// artifacts it needs from the directory.
class BenchRunner {
 public:
  explicit BenchRunner(BenchConfig cfg);

  void generate();
  void train();
  std::vector<ResultRow> evaluate();
  void report();
  void calibrate();
  /// Full pipeline; returns the number of failed evaluation cells.
  int run_all();

  const BenchConfig& config() const { return cfg_; }
  const Dataset& train_split();
  const Dataset& test_split();

  /// Policy for one algorithm at one preference (baselines ignore w).
  std::unique_ptr<Policy> make_policy(const std::string& algorithm, const PreferenceVector& w);

  uint64_t cell_seed(const std::string& algorithm, const PreferenceVector& w,
                     const std::string& metric) const;

 private:
  void ensure_datasets();
  void ensure_models(const std::vector<std::string>& algorithms);
  void ensure_behavior();
  std::string checkpoint_path(const std::string& algorithm) const;
  void write_manifest() const;

  BenchConfig cfg_;
  std::optional<Dataset> train_;
  std::optional<Dataset> test_;
  std::optional<BehaviorModel> behavior_;
  std::shared_ptr<SoftmaxPolicy> bc_policy_;
  std::optional<Mlp> ddqn_q_;
  std::optional<Mlp> cql_q_;
  std::shared_ptr<VectorQNet> c_cpql_;
  std::shared_ptr<VectorQNet> ap_cpql_;
  std::shared_ptr<DecisionTransformer> peda_dt_;
};

}  // namespace morlbench
