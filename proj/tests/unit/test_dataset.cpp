#include <doctest.h>

#include <set>
#include <sstream>

#include "morlbench/dataset.hpp"
#include "test_util.hpp"

using namespace morlbench;

TEST_CASE("save/load round trip is exact on every field") {
  Dataset d = testutil::tiny_dataset(5, 4, 3, 99);
  d.stats.mean = {0.1, -2.5e-7, 3.0, 1.0 / 3.0};
  d.stats.stddev = {1.0, 0.3333333333333333, 2.0, 1e-12};
  std::stringstream ss;
  save_dataset(d, ss);
  Dataset back = load_dataset(ss, "<fixture>");
  REQUIRE(back.num_episodes() == d.num_episodes());
  CHECK(back.feature_names == d.feature_names);
  CHECK(back.num_actions == d.num_actions);
  CHECK(back.stats.mean == d.stats.mean);
  CHECK(back.stats.stddev == d.stats.stddev);
  for (int e = 0; e < d.num_episodes(); ++e) {
    const Trajectory& a = d.trajectories[e];
    const Trajectory& b = back.trajectories[e];
    REQUIRE(a.id == b.id);
    REQUIRE(a.length() == b.length());
    for (int t = 0; t < a.length(); ++t) {
      CHECK(a.transitions[t].state == b.transitions[t].state);
      CHECK(a.transitions[t].action == b.transitions[t].action);
      CHECK(a.transitions[t].reward == b.transitions[t].reward);
      CHECK(a.transitions[t].done == b.transitions[t].done);
      CHECK(a.transitions[t].t == b.transitions[t].t);
    }
  }
}

TEST_CASE("loader reports malformed lines with their number") {
  std::stringstream ss("H 2 3 f0 f1\nT ep0 1 0.0 0.0 nonsense 0 0 1\n");
  try {
    load_dataset(ss, "<bad>");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("<bad>:2") != std::string::npos);
  }
}

TEST_CASE("loader rejects invariant violations by trajectory id") {
  // action 7 >= A=3
  std::stringstream ss("H 2 3 f0 f1\nT epX 1 0.0 0.0 7 0 0 1\n");
  try {
    load_dataset(ss, "<bad>");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("epX") != std::string::npos);
  }
}

TEST_CASE("empty file fails the N >= 1 requirement") {
  std::stringstream ss("");
  try {
    load_dataset(ss, "<empty>");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("N >= 1") != std::string::npos);
  }
}

TEST_CASE("validate catches structural mistakes") {
  Dataset d = testutil::tiny_dataset(2);
  SUBCASE("no trajectories") {
    d.trajectories.clear();
    CHECK_THROWS_AS(validate(d), ValidationError);
  }
  SUBCASE("done in the middle") {
    Dataset bad = d;
    bad.trajectories[0].transitions.front().done = true;
    bad.trajectories[0].transitions.push_back(bad.trajectories[0].transitions.front());
    CHECK_THROWS_AS(validate(bad), ValidationError);
  }
  SUBCASE("timestep gap") {
    Dataset bad = d;
    bad.trajectories[0].transitions.back().t = 99;
    CHECK_THROWS_AS(validate(bad), ValidationError);
  }
  SUBCASE("reward out of range") {
    Dataset bad = d;
    bad.trajectories[0].transitions.back().reward.mortality = 1.5;
    CHECK_THROWS_AS(validate(bad), ValidationError);
  }
}

TEST_CASE("split sizes, determinism, partition") {
  Dataset d = testutil::tiny_dataset(10, 3, 2, 1);
  auto [train, test] = split_dataset(d, 0.2, 7);
  CHECK(train.num_episodes() == 8);
  CHECK(test.num_episodes() == 2);

  auto [train2, test2] = split_dataset(d, 0.2, 7);
  for (int i = 0; i < train.num_episodes(); ++i) {
    CHECK(train.trajectories[i].id == train2.trajectories[i].id);
  }
  for (int i = 0; i < test.num_episodes(); ++i) {
    CHECK(test.trajectories[i].id == test2.trajectories[i].id);
  }

  std::set<std::string> ids;
  for (const auto& t : train.trajectories) ids.insert(t.id);
  for (const auto& t : test.trajectories) {
    CHECK(ids.count(t.id) == 0);
    ids.insert(t.id);
  }
  CHECK(static_cast<int>(ids.size()) == d.num_episodes());
}

TEST_CASE("split rejects degenerate fractions") {
  Dataset d1 = testutil::tiny_dataset(1);
  CHECK_THROWS_AS(split_dataset(d1, 0.5, 0), UsageError);
  Dataset d = testutil::tiny_dataset(10);
  CHECK_THROWS_AS(split_dataset(d, 0.0, 0), UsageError);
  CHECK_THROWS_AS(split_dataset(d, 1.0, 0), UsageError);
  CHECK_THROWS_AS(split_dataset(d, 0.01, 0), UsageError);  // rounds to zero test episodes
}

TEST_CASE("normalalization: constant columns, z-scores, idempotence") {
  Dataset d;
  d.num_actions = 2;
  d.feature_names = {"constant", "pair"};
  d.stats.mean.assign(2, 0.0);
  d.stats.stddev.assign(2, 1.0);
  for (int e = 0; e < 2; ++e) {
    Trajectory traj;
    traj.id = "n" + std::to_string(e);
    Transition tr;
    tr.t = 1;
    tr.done = true;
    tr.action = 0;
    tr.reward = {0.0, 0.0};
    tr.state = {1.0, e == 0 ? 0.0 : 2.0};
    traj.transitions.push_back(tr);
    d.trajectories.push_back(traj);
  }
  Dataset norm = normalize_features(d);
  CHECK(norm.stats.stddev[0] == 1.0);  // constant column rule
  CHECK(norm.trajectories[0].transitions[0].state[0] == 0.0);
  CHECK(norm.trajectories[1].transitions[0].state[0] == 0.0);
  CHECK(norm.stats.mean[1] == 1.0);
  CHECK(norm.stats.stddev[1] == 1.0);  // population stddev of {0, 2}
  CHECK(norm.trajectories[0].transitions[0].state[1] == -1.0);
  CHECK(norm.trajectories[1].transitions[0].state[1] == 1.0);

  Dataset again = normalize_features(norm);
  for (int e = 0; e < 2; ++e) {
    for (size_t j = 0; j < 2; ++j) {
      CHECK(again.trajectories[e].transitions[0].state[j] ==
            doctest::Approx(norm.trajectories[e].transitions[0].state[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("flat transitions wire next states and episode offsets") {
  Dataset d = testutil::tiny_dataset(3, 2, 2, 5);
  FlatTransitions f = FlatTransitions::from(d);
  CHECK(f.size() == d.num_transitions());
  CHECK(static_cast<int>(f.episode_start.size()) == d.num_episodes());
  int row = 0;
  for (const auto& traj : d.trajectories) {
    for (int t = 0; t < traj.length(); ++t, ++row) {
      CHECK(f.actions[row] == traj.transitions[t].action);
      CHECK((f.done[row] != 0) == traj.transitions[t].done);
      if (!traj.transitions[t].done) {
        auto next = f.next_state(row);
        for (size_t j = 0; j < next.size(); ++j) {
          CHECK(next[j] == traj.transitions[t + 1].state[j]);
        }
      }
    }
  }
}
