#include "morlbench/types.hpp"

#include <cmath>
#include <cstdio>

namespace morlbench {

PreferenceVector::PreferenceVector(double w_mortality, double w_los)
    : w_mortality_(w_mortality), w_los_(w_los) {
  if (!(w_mortality >= 0.0) || !(w_los >= 0.0)) {
    throw ValidationError("PreferenceVector: weights must be nonnegative");
  }
  if (std::abs(w_mortality + w_los - 1.0) > 1e-9) {
    throw ValidationError("PreferenceVector: weights must sum to 1");
  }
}

std::string PreferenceVector::label() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%.6g, %.6g]", w_mortality_, w_los_);
  return buf;
}

double scalarize(const VectorReward& r, const PreferenceVector& w) {
  return w.w_mortality() * r.mortality + w.w_los() * r.los;
}

VectorReward discounted_return(const Trajectory& traj, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw UsageError("discounted_return: gamma must be in (0, 1]");
  }
  VectorReward total;
  double g = 1.0;
  for (const Transition& tr : traj.transitions) {
    total += g * tr.reward;
    g *= gamma;
  }
  return total;
}

void NormalizationStats::apply(std::span<double> features) const {
  for (size_t i = 0; i < features.size(); ++i) {
    features[i] = (features[i] - mean[i]) / stddev[i];
  }
}

int Dataset::num_transitions() const {
  int n = 0;
  for (const auto& traj : trajectories) n += traj.length();
  return n;
}

void validate(const Dataset& d) {
  if (d.trajectories.empty()) {
    throw ValidationError("Dataset: N >= 1 required (no trajectories)");
  }
  if (d.num_actions < 1) {
    throw ValidationError("Dataset: num_actions must be >= 1");
  }
  const size_t dim = d.feature_names.size();
  if (dim == 0) throw ValidationError("Dataset: feature_names must be non-empty");
  if (d.stats.mean.size() != dim || d.stats.stddev.size() != dim) {
    throw ValidationError("Dataset: normalization stats width != feature width");
  }
  for (const Trajectory& traj : d.trajectories) {
    if (traj.transitions.empty()) {
      throw ValidationError("trajectory " + traj.id + ": length must be >= 1");
    }
    for (size_t i = 0; i < traj.transitions.size(); ++i) {
      const Transition& tr = traj.transitions[i];
      if (tr.state.size() != dim) {
        throw ValidationError("trajectory " + traj.id + ": state width mismatch");
      }
      if (tr.action < 0 || tr.action >= d.num_actions) {
        throw ValidationError("trajectory " + traj.id + ": action out of range");
      }
      if (tr.t != static_cast<int>(i) + 1) {
        throw ValidationError("trajectory " + traj.id + ": timesteps not consecutive from 1");
      }
      const bool last = (i + 1 == traj.transitions.size());
      if (tr.done != last) {
        throw ValidationError("trajectory " + traj.id +
                              ": done must be set exactly on the final transition");
      }
      for (double r : {tr.reward.mortality, tr.reward.los}) {
        if (!std::isfinite(r) || r < 0.0 || r > 1.0) {
          throw ValidationError("trajectory " + traj.id + ": reward component outside [0,1]");
        }
      }
      for (double x : tr.state) {
        if (!std::isfinite(x)) {
          throw ValidationError("trajectory " + traj.id + ": non-finite state feature");
        }
      }
    }
  }
}

}  // namespace morlbench
