#include <doctest.h>

#include <array>
#include <sstream>

#include <json.hpp>

#include "blindnav/agent.hpp"
#include "reference_model.hpp"

using namespace blindnav;
using namespace blindnav::agent;
using gridworld::Observation;

namespace {

nets::NetConfig config(std::size_t obs = 16) {
  return {.observation_dim = obs, .num_actions = 4, .hidden_dim = 8,
          .encoder_hidden_dim = 6};
}

// Xavier weights plus random biases, so heads are not trivially zero.
ModelParams random_params(std::uint64_t seed, std::size_t obs = 16) {
  Rng rng(seed);
  auto p = ModelParams::xavier(config(obs), rng);
  for (auto& t : p.parameters())
    for (double& v : t.data()) v += rng.uniform(-0.3, 0.3);
  return p;
}

}  // namespace

TEST_CASE("single-action rollout is r + gamma v") {
  auto p = random_params(1);
  const std::size_t cell[] = {5};
  const int a = 2;
  auto h = p.transition(p.encode(cell), std::span(&a, 1));
  const double r = p.reward(h).item(), v = p.value(h).item();
  CHECK(q_rollout(p, 5, std::span(&a, 1), 0.9) == doctest::Approx(r + 0.9 * v).epsilon(1e-14));
  CHECK(q_rollout(p, 5, std::span(&a, 1), 0.0) == doctest::Approx(r).epsilon(1e-14));
}

TEST_CASE("rollout matches the scalar reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = random_params(seed);
    reference::Weights ref(p);
    Rng rng(seed + 100);
    std::vector<int> actions;
    for (int i = 0; i < 3; ++i) actions.push_back(static_cast<int>(rng.index(4)));
    const std::size_t cell = rng.index(16);
    CHECK(q_rollout(p, cell, actions, 0.99) ==
          doctest::Approx(reference::q_rollout(ref, cell, actions, 0.99)).epsilon(1e-10));
  }
}

TEST_CASE("rollout rejects bad input") {
  auto p = random_params(2);
  std::vector<int> none;
  CHECK_THROWS_AS(q_rollout(p, 0, none, 0.9), std::invalid_argument);
  std::vector<int> bad{5};
  CHECK_THROWS_AS(q_rollout(p, 0, bad, 0.9), std::out_of_range);
}

TEST_CASE("greedy ties go to the lowest action id") {
  CHECK(greedy_action({1.0, 1.0, 1.0, 1.0}) == 0);
  CHECK(greedy_action({0.0, 2.0, 2.0, 1.0}) == 1);
  CHECK(greedy_action({0.0, 0.0, 0.0, 0.5}) == 3);
}

TEST_CASE("epsilon = 1 picks actions uniformly") {
  auto p = random_params(3);
  Rng rng(42);
  std::array<int, 4> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    auto d = select_action({}, Observation::visible(3), p, 0.99, 1.0, rng);
    CHECK(d.explored);
    ++counts[d.action];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  // 3 degrees of freedom, 0.999 quantile
  CHECK(chi2 < 16.27);
}

TEST_CASE("epsilon = 0 is deterministic and greedy") {
  auto p = random_params(4);
  Rng a(1), b(2);
  auto d1 = select_action({}, Observation::visible(7), p, 0.99, 0.0, a);
  auto d2 = select_action({}, Observation::visible(7), p, 0.99, 0.0, b);
  CHECK(d1.action == d2.action);
  CHECK_FALSE(d1.explored);
  CHECK(d1.action == greedy_action(d1.q));
  reference::Weights ref(p);
  const int expect = reference::greedy_actions(ref, 7, 0, 0.99)[0];
  CHECK(d1.action == expect);
}

TEST_CASE("blind actions follow the open-loop oracle") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto p = random_params(10 + seed);
    reference::Weights ref(p);
    const int k = 6;
    const std::size_t entry = seed % 16;
    Rng rng(0);
    ControllerState state;
    std::vector<int> got;
    auto d = select_action(state, Observation::visible(entry), p, 0.99, 0.0, rng);
    got.push_back(d.action);
    state = d.next;
    for (int t = 0; t < k; ++t) {
      d = select_action(state, Observation::blinded(), p, 0.99, 0.0, rng);
      CHECK(d.next.mode == Mode::kOpen);
      CHECK(d.next.steps_blind == t + 1);
      got.push_back(d.action);
      state = d.next;
    }
    CHECK(got == reference::greedy_actions(ref, entry, k, 0.99));
  }
}

TEST_CASE("a visible observation ends a blind stretch") {
  auto p = random_params(5);
  Rng rng(0);
  ControllerState state;
  state = select_action(state, Observation::visible(1), p, 0.99, 0.0, rng).next;
  CHECK(state.mode == Mode::kClosed);
  for (int i = 0; i < 4; ++i)
    state = select_action(state, Observation::blinded(), p, 0.99, 0.0, rng).next;
  CHECK(state.steps_blind == 4);
  auto d = select_action(state, Observation::visible(9), p, 0.99, 0.0, rng);
  CHECK(d.next.mode == Mode::kClosed);
  CHECK(d.next.steps_blind == 0);
  // Re-encoding discards the blind history.
  auto fresh = select_action({}, Observation::visible(9), p, 0.99, 0.0, rng);
  CHECK(d.q == fresh.q);
}

TEST_CASE("blind before any visible observation is an error") {
  auto p = random_params(6);
  Rng rng(0);
  CHECK_THROWS_AS(select_action({}, Observation::blinded(), p, 0.99, 0.0, rng),
                  std::logic_error);
}

TEST_CASE("uniform shift of head biases leaves the greedy action unchanged") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = random_params(20 + seed);
    Rng rng(0);
    auto before = select_action({}, Observation::visible(seed), p, 0.9, 0.0, rng);
    auto shifted = p.clone(false);
    shifted.get("reward.b").data()[0] += 0.37;
    shifted.get("value.b").data()[0] += 0.37;
    auto after = select_action({}, Observation::visible(seed), shifted, 0.9, 0.0, rng);
    CHECK(after.action == before.action);
    for (int a = 0; a < 4; ++a)
      CHECK(after.q[a] - before.q[a] == doctest::Approx(0.37 * 1.9).epsilon(1e-12));
  }
}

TEST_CASE("episodes respect masks and the step cap") {
  auto maze = gridworld::parse_maze("S...\n....\n...G");
  auto p = random_params(7, maze.cell_count());
  auto mask = gridworld::parse_mask(".BB.\n....\n....", maze);
  Rng rng(3);
  auto ep = run_episode(maze, p, std::span(&mask, 1), 0.99, 0.3, rng, true);
  CHECK(ep.length == static_cast<int>(ep.steps.size()));
  CHECK(ep.length <= 150);
  CHECK((ep.reached_goal || ep.length == 150));
  double total = 0.0;
  for (const auto& s : ep.steps) {
    CHECK(s.blind == mask.contains(maze.index(s.cell)));
    total += s.reward;
  }
  CHECK(total == doctest::Approx(ep.total_reward));

  std::ostringstream out;
  write_recording(out, ep);
  std::istringstream lines(out.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["t"] == n);
    CHECK(j["cell"].size() == 2);
    CHECK(j.contains("blind"));
    CHECK(j["action"].is_string());
    CHECK(j["reward"].is_number());
    ++n;
  }
  CHECK(n == ep.length);
}
