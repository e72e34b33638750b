#include "morlbench/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "morlbench/rng.hpp"

namespace morlbench {

namespace {

void print_double(std::ostream& out, double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out << buf;
}

[[noreturn]] void parse_fail(const std::string& origin, int line_no, const std::string& what) {
  throw ParseError(origin + ":" + std::to_string(line_no) + ": " + what);
}

double read_double(std::istringstream& ss, const std::string& origin, int line_no,
                   const char* field) {
  double x;
  if (!(ss >> x)) parse_fail(origin, line_no, std::string("expected number for ") + field);
  return x;
}

}  // namespace

void save_dataset(const Dataset& d, std::ostream& out) {
  out << "H " << d.feature_names.size() << ' ' << d.num_actions;
  for (const auto& name : d.feature_names) out << ' ' << name;
  out << '\n';
  out << "S";
  for (double m : d.stats.mean) {
    out << ' ';
    print_double(out, m);
  }
  for (double s : d.stats.stddev) {
    out << ' ';
    print_double(out, s);
  }
  out << '\n';
  for (const Trajectory& traj : d.trajectories) {
    for (const Transition& tr : traj.transitions) {
      out << "T " << traj.id << ' ' << tr.t;
      for (double x : tr.state) {
        out << ' ';
        print_double(out, x);
      }
      out << ' ' << tr.action << ' ';
      print_double(out, tr.reward.mortality);
      out << ' ';
      print_double(out, tr.reward.los);
      out << ' ' << (tr.done ? 1 : 0) << '\n';
    }
  }
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("save_dataset: cannot open " + path);
  save_dataset(d, out);
}

Dataset load_dataset(std::istream& in, const std::string& origin) {
  Dataset d;
  bool have_header = false;
  bool have_stats = false;
  int line_no = 0;
  std::string line;
  std::string current_id;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "H") {
      if (have_header) parse_fail(origin, line_no, "duplicate header record");
      int dim = 0;
      if (!(ss >> dim >> d.num_actions)) parse_fail(origin, line_no, "malformed header record");
      if (dim < 1) parse_fail(origin, line_no, "feature dimension must be >= 1");
      for (int i = 0; i < dim; ++i) {
        std::string name;
        if (!(ss >> name)) parse_fail(origin, line_no, "missing feature name");
        d.feature_names.push_back(name);
      }
      d.stats.mean.assign(dim, 0.0);
      d.stats.stddev.assign(dim, 1.0);
      have_header = true;
    } else if (tag == "S") {
      if (!have_header) parse_fail(origin, line_no, "stats record before header");
      if (have_stats) parse_fail(origin, line_no, "duplicate stats record");
      const int dim = static_cast<int>(d.feature_names.size());
      for (int i = 0; i < dim; ++i) d.stats.mean[i] = read_double(ss, origin, line_no, "mean");
      for (int i = 0; i < dim; ++i) d.stats.stddev[i] = read_double(ss, origin, line_no, "stddev");
      have_stats = true;
    } else if (tag == "T") {
      if (!have_header) parse_fail(origin, line_no, "transition record before header");
      const int dim = static_cast<int>(d.feature_names.size());
      Transition tr;
      std::string id;
      if (!(ss >> id >> tr.t)) parse_fail(origin, line_no, "malformed transition record");
      tr.state.resize(dim);
      for (int i = 0; i < dim; ++i) tr.state[i] = read_double(ss, origin, line_no, "state");
      if (!(ss >> tr.action)) parse_fail(origin, line_no, "expected action id");
      tr.reward.mortality = read_double(ss, origin, line_no, "r_mortality");
      tr.reward.los = read_double(ss, origin, line_no, "r_los");
      int done_flag;
      if (!(ss >> done_flag)) parse_fail(origin, line_no, "expected done flag");
      tr.done = (done_flag != 0);
      if (id != current_id) {
        d.trajectories.push_back(Trajectory{id, {}});
        current_id = id;
      }
      d.trajectories.back().transitions.push_back(std::move(tr));
    } else {
      parse_fail(origin, line_no, "unknown record tag '" + tag + "'");
    }
  }
  if (!have_header) {
    throw ValidationError(origin + ": empty or headerless file (dataset requires N >= 1)");
  }
  validate(d);  // also rejects the episode-free case: N >= 1
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("load_dataset: cannot open " + path);
  return load_dataset(in, path);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw UsageError("split_dataset: test_fraction must be in (0, 1)");
  }
  const int n = d.num_episodes();
  const int n_test = static_cast<int>(std::llround(n * test_fraction));
  if (n_test < 1 || n_test >= n) {
    throw UsageError("split_dataset: both splits need at least one episode");
  }
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<uint8_t> is_test(n, 0);
  for (int i = 0; i < n_test; ++i) is_test[idx[i]] = 1;

  Dataset train, test;
  train.feature_names = test.feature_names = d.feature_names;
  train.num_actions = test.num_actions = d.num_actions;
  train.stats = test.stats = d.stats;
  for (int i = 0; i < n; ++i) {
    (is_test[i] ? test : train).trajectories.push_back(d.trajectories[i]);
  }
  return {std::move(train), std::move(test)};
}

Dataset normalize_features(const Dataset& d) {
  const int dim = d.num_features();
  const int n = d.num_transitions();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& traj : d.trajectories) {
    for (const auto& tr : traj.transitions) {
      for (int j = 0; j < dim; ++j) mean[j] += tr.state[j];
    }
  }
  for (int j = 0; j < dim; ++j) mean[j] /= n;
  for (const auto& traj : d.trajectories) {
    for (const auto& tr : traj.transitions) {
      for (int j = 0; j < dim; ++j) {
        const double delta = tr.state[j] - mean[j];
        var[j] += delta * delta;
      }
    }
  }
  Dataset out = d;
  out.stats.mean = mean;
  out.stats.stddev.assign(dim, 1.0);
  for (int j = 0; j < dim; ++j) {
    const double sd = std::sqrt(var[j] / n);
    if (sd > 0.0) out.stats.stddev[j] = sd;  // constant columns keep stddev 1
  }
  for (auto& traj : out.trajectories) {
    for (auto& tr : traj.transitions) out.stats.apply(tr.state);
  }
  return out;
}

FlatTransitions FlatTransitions::from(const Dataset& d) {
  FlatTransitions f;
  f.state_dim = d.num_features();
  f.num_actions = d.num_actions;
  const int n = d.num_transitions();
  f.states.assign(static_cast<size_t>(n) * f.state_dim, 0.0);
  f.next_states.assign(static_cast<size_t>(n) * f.state_dim, 0.0);
  f.actions.reserve(n);
  f.rewards.reserve(n);
  f.done.reserve(n);
  int row = 0;
  for (const Trajectory& traj : d.trajectories) {
    f.episode_start.push_back(row);
    f.episode_length.push_back(traj.length());
    for (size_t i = 0; i < traj.transitions.size(); ++i) {
      const Transition& tr = traj.transitions[i];
      std::copy(tr.state.begin(), tr.state.end(),
                f.states.begin() + static_cast<size_t>(row) * f.state_dim);
      if (!tr.done) {
        const auto& next = traj.transitions[i + 1].state;
        std::copy(next.begin(), next.end(),
                  f.next_states.begin() + static_cast<size_t>(row) * f.state_dim);
      }
      f.actions.push_back(tr.action);
      f.rewards.push_back(tr.reward);
      f.done.push_back(tr.done ? 1 : 0);
      ++row;
    }
  }
  return f;
}

}  // namespace morlbench
