#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace morlbench {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step reward with one component per clinical objective.
/// Both components live in [0, 1]; with the terminal-reward encoding used
/// by the synthetic environment this keeps discounted returns in [0, 1].
struct VectorReward {
  double mortality = 0.0;
  double los = 0.0;

  VectorReward& operator+=(const VectorReward& o) {
    mortality += o.mortality;
    los += o.los;
    return *this;
  }
  friend VectorReward operator+(VectorReward a, const VectorReward& b) { return a += b; }
  friend VectorReward operator*(double c, const VectorReward& r) {
    return {c * r.mortality, c * r.los};
  }
  friend VectorReward operator-(VectorReward a, const VectorReward& b) {
    return {a.mortality - b.mortality, a.los - b.los};
  }
  friend bool operator==(const VectorReward&, const VectorReward&) = default;
};

/// Weights over (mortality, los); nonnegative and summing to 1 within 1e-9.
class PreferenceVector {
 public:
  PreferenceVector() : w_mortality_(0.5), w_los_(0.5) {}
  PreferenceVector(double w_mortality, double w_los);

  double w_mortality() const { return w_mortality_; }
  double w_los() const { return w_los_; }

  std::string label() const;  // e.g. "[0.3, 0.7]"

  friend bool operator==(const PreferenceVector&, const PreferenceVector&) = default;

 private:
  double w_mortality_;
  double w_los_;
};

double scalarize(const VectorReward& r, const PreferenceVector& w);

struct Transition {
  std::vector<double> state;
  int action = 0;
  VectorReward reward;
  bool done = false;
  int t = 1;  // 1-based timestep
};

struct Trajectory {
  std::string id;
  std::vector<Transition> transitions;

  int length() const { return static_cast<int>(transitions.size()); }
};

/// Component-wise sum_t gamma^(t-1) r_t. Requires 0 < gamma <= 1.
VectorReward discounted_return(const Trajectory& traj, double gamma);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// z-scores a raw feature vector in place.
  void apply(std::span<double> features) const;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<std::string> feature_names;
  int num_actions = 0;
  NormalizationStats stats;

  int num_episodes() const { return static_cast<int>(trajectories.size()); }
  int num_features() const { return static_cast<int>(feature_names.size()); }
  int num_transitions() const;
};

/// Checks every structural invariant (N >= 1, consistent widths, action
/// range, consecutive 1-based timesteps, done exactly on the last
/// transition, finite rewards in [0,1]). Throws ValidationError naming the
/// offending trajectory.
void validate(const Dataset& d);

}  // namespace morlbench
