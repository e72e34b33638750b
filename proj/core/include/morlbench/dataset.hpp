#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "morlbench/types.hpp"

namespace morlbench {

/// Line-delimited trajectory format.
///
///   H <D> <A> <name_1> ... <name_D>
///   S <mean_1> ... <mean_D> <stddev_1> ... <stddev_D>
///   T <episode_id> <t> <s_1> ... <s_D> <action> <r_mortality> <r_los> <done>
///
/// Doubles are printed with %.17g so a save/load round trip is exact.
Dataset load_dataset(const std::string& path);
Dataset load_dataset(std::istream& in, const std::string& origin = "<stream>");
void save_dataset(const Dataset& d, const std::string& path);
void save_dataset(const Dataset& d, std::ostream& out);

/// Episode-level split. Deterministic for a fixed seed; both halves keep
/// the original episode order. Requires 0 < test_fraction < 1 and at least
/// one episode on each side.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction, uint64_t seed);

/// Z-scores every feature column over all transitions (population stddev)
/// and records the stats. Constant columns map to 0 with stddev stored as 1.
Dataset normalize_features(const Dataset& d);

/// Column-major view of a dataset used by the trainers and estimators.
/// next_states rows are zero where done is set (never read).
struct FlatTransitions {
  int state_dim = 0;
  int num_actions = 0;
  std::vector<double> states;       // n x D, row-major
  std::vector<double> next_states;  // n x D, row-major
  std::vector<int> actions;
  std::vector<VectorReward> rewards;
  std::vector<uint8_t> done;
  std::vector<int> episode_start;   // first transition index per episode
  std::vector<int> episode_length;

  int size() const { return static_cast<int>(actions.size()); }
  std::span<const double> state(int i) const {
    return {states.data() + static_cast<size_t>(i) * state_dim, static_cast<size_t>(state_dim)};
  }
  std::span<const double> next_state(int i) const {
    return {next_states.data() + static_cast<size_t>(i) * state_dim,
            static_cast<size_t>(state_dim)};
  }

  static FlatTransitions from(const Dataset& d);
};

}  // namespace morlbench
