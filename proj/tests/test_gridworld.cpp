#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "blindnav/gridworld.hpp"
#include "blindnav/random.hpp"

using namespace blindnav;
using namespace blindnav::gridworld;

namespace {

const std::filesystem::path kData = BLINDNAV_DATA_DIR;

MazeSpec benchmark() { return load_maze(kData / "mazes/benchmark.maze"); }
MazeSpec zigzag() { return load_maze(kData / "mazes/zigzag.maze"); }

std::vector<Mask> benchmark_masks(const MazeSpec& maze) {
  return {load_mask(kData / "mazes/benchmark_room.mask", maze),
          load_mask(kData / "mazes/benchmark_zigzag.mask", maze),
          load_mask(kData / "mazes/benchmark_forks.mask", maze)};
}

std::string error_of(std::string_view text) {
  try {
    parse_maze(text, "m");
  } catch (const MazeError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("shipped mazes have the expected optimal lengths") {
  CHECK(bfs_optimal_length(parse_maze("SG")) == 1);
  CHECK(bfs_optimal_length(load_maze(kData / "mazes/tiny.maze")) == 1);
  CHECK(bfs_optimal_length(benchmark()) == 34);
  CHECK(bfs_optimal_length(zigzag()) == 40);
  CHECK(bfs_optimal_length(load_maze(kData / "mazes/open5.maze")) == 8);
}

TEST_CASE("benchmark masks") {
  auto maze = benchmark();
  auto masks = benchmark_masks(maze);
  CHECK(pairwise_disjoint(masks));
  std::vector<int> steps;
  for (const auto& m : masks) {
    CHECK_FALSE(m.contains(maze.index(maze.start)));
    CHECK_FALSE(m.contains(maze.index(maze.goal)));
    for (auto i : m.cells) CHECK_FALSE(maze.walls[i]);
    steps.push_back(masked_optimal_steps(maze, m));
  }
  CHECK(*std::max_element(steps.begin(), steps.end()) == 8);
  CHECK(*std::min_element(steps.begin(), steps.end()) == 6);
  CHECK(masks[0].name == "benchmark_room");
}

TEST_CASE("pairwise_disjoint detects overlap") {
  auto maze = parse_maze("S..\n...\n..G");
  auto a = parse_mask("...\n.B.\n...", maze);
  auto b = parse_mask("...\n.BB\n...", maze);
  auto c = parse_mask("...\n...\nB..", maze);
  std::vector<Mask> ab{a, b}, ac{a, c};
  CHECK_FALSE(pairwise_disjoint(ab));
  CHECK(pairwise_disjoint(ac));
}

TEST_CASE("maze parse errors name line and column") {
  CHECK(error_of("S.\n.").find("m:2:") != std::string::npos);
  CHECK(error_of("S.\tG").find("m:1:3") != std::string::npos);
  CHECK(error_of("SS\n.G").find("m:1:2") != std::string::npos);
  CHECK(error_of("S..\n...").find("goal") != std::string::npos);
  CHECK(error_of("..G").find("start") != std::string::npos);
  CHECK(error_of("S#G").find("unreachable") != std::string::npos);
  CHECK(error_of("S.x\n..G").find("m:1:3") != std::string::npos);
  CHECK_NOTHROW(parse_maze("S.\r\n.G\r\n"));
  CHECK_THROWS_AS(load_maze(kData / "mazes/does_not_exist.maze"), MazeError);
}

TEST_CASE("mask parse errors") {
  auto maze = parse_maze("S..\n..G");
  CHECK_THROWS_AS(parse_mask("...", maze), MazeError);
  CHECK_THROWS_AS(parse_mask("..X\n...", maze), MazeError);
  CHECK_THROWS_AS(parse_mask("....\n...", maze), MazeError);
  auto m = parse_mask(".B.\n..B", maze);
  CHECK(m.cells == std::vector<std::size_t>{1, 5});
}

TEST_CASE("step rules") {
  auto maze = parse_maze("#.#\nS.G\n###");
  Environment env(maze);
  CHECK(env.cell() == Cell{1, 0});

  auto r = env.step(static_cast<int>(Action::kUp));  // wall
  CHECK(r.cell == Cell{1, 0});
  CHECK(r.reward == kWallReward);
  CHECK_FALSE(r.done());

  r = env.step(static_cast<int>(Action::kLeft));  // boundary
  CHECK(r.cell == Cell{1, 0});
  CHECK(r.reward == -0.02);

  r = env.step(static_cast<int>(Action::kRight));
  CHECK(r.cell == Cell{1, 1});
  CHECK(r.reward == -0.01);

  r = env.step(static_cast<int>(Action::kRight));
  CHECK(r.cell == Cell{1, 2});
  CHECK(r.reward == 1.0);
  CHECK(r.reached_goal);
  CHECK_FALSE(r.truncated);
  CHECK_THROWS_AS(env.step(0), std::logic_error);

  env.reset();
  CHECK(env.steps() == 0);
  CHECK_THROWS_AS(env.step(4), std::out_of_range);
}

TEST_CASE("truncation is distinct from reaching the goal") {
  auto maze = parse_maze("S.G");
  maze.max_episode_steps = 3;
  Environment env(maze);
  env.step(2);
  env.step(2);
  auto r = env.step(2);
  CHECK(r.truncated);
  CHECK_FALSE(r.reached_goal);
  CHECK(r.done());
  CHECK_THROWS_AS(env.step(3), std::logic_error);
}

TEST_CASE("observe") {
  auto maze = benchmark();
  auto masks = benchmark_masks(maze);
  const Cell room{3, 4};
  CHECK(observe(maze, room, masks).blind);
  auto o = observe(maze, maze.start, masks);
  CHECK_FALSE(o.blind);
  CHECK(o.index == 1 * 16 + 1);
  auto v = o.one_hot(maze.cell_count());
  CHECK(std::count(v.begin(), v.end(), 1.0) == 1);
  CHECK(v[17] == 1.0);
  CHECK_FALSE(observe(maze, room, {}).blind);
  CHECK(observe(maze, room, masks) == observe(maze, room, masks));
}

TEST_CASE("prefix masks") {
  auto maze = zigzag();
  auto path = canonical_optimal_path(maze);
  REQUIRE(path.size() == 41);
  CHECK(path.front() == maze.start);
  CHECK(path.back() == maze.goal);
  CHECK(prefix_mask(maze, 0).empty());
  auto one = prefix_mask(maze, 1);
  CHECK(one.cells == std::vector<std::size_t>{maze.index(path[1])});
  auto all = prefix_mask(maze, 40);
  CHECK(all.cells.size() == 40);
  for (std::size_t i = 1; i <= 40; ++i) CHECK(all.contains(maze.index(path[i])));
  CHECK_FALSE(all.contains(maze.index(maze.start)));
  CHECK_THROWS_AS(prefix_mask(maze, 41), std::out_of_range);
  CHECK_THROWS_AS(prefix_mask(maze, -1), std::out_of_range);
}

TEST_CASE("canonical path is a valid shortest walk") {
  for (const auto& maze : {benchmark(), zigzag()}) {
    auto path = canonical_optimal_path(maze);
    CHECK(static_cast<int>(path.size()) == bfs_optimal_length(maze) + 1);
    for (std::size_t i = 1; i < path.size(); ++i) {
      CHECK(std::abs(path[i].row - path[i - 1].row) +
                std::abs(path[i].col - path[i - 1].col) == 1);
      CHECK_FALSE(maze.is_wall(path[i]));
    }
  }
}

TEST_CASE("random walks never enter walls and rewards add up") {
  const auto mazes = {benchmark(), zigzag(), parse_maze("S.\n.G")};
  int goal_episodes = 0;
  for (const auto& base : mazes) {
    auto maze = base;
    maze.max_episode_steps = 5000;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Rng rng(seed);
      Environment env(maze);
      int wall_bumps = 0, length = 0;
      double total = 0.0;
      StepResult r;
      do {
        const Cell before = env.cell();
        r = env.step(static_cast<int>(rng.index(4)));
        ++length;
        total += r.reward;
        CHECK_FALSE(maze.is_wall(r.cell));
        if (r.cell == before) {
          ++wall_bumps;
          CHECK(r.reward == kWallReward);
        }
      } while (!r.done());
      if (r.reached_goal) {
        ++goal_episodes;
        // +1 on the goal step, -0.01 per other move, -0.02 per bump.
        const double expected =
            1.0 - 0.01 * (length - 1 - wall_bumps) - 0.02 * wall_bumps;
        CHECK(total == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
  CHECK(goal_episodes > 30);
}

TEST_CASE("value iteration agrees with BFS on every shipped maze") {
  for (auto name : {"tiny", "open5", "benchmark", "zigzag"}) {
    auto maze = load_maze(kData / "mazes" / (std::string(name) + ".maze"));
    auto vi = value_iteration(maze, 0.99);
    INFO(name);
    REQUIRE(vi.greedy_episode_length.has_value());
    CHECK(*vi.greedy_episode_length == bfs_optimal_length(maze));
  }
}

TEST_CASE("value iteration matches the closed form on a corridor") {
  auto maze = parse_maze("S...G");
  auto vi = value_iteration(maze, 0.9);
  // k steps from the goal: sum_{i<k-1} 0.9^i * -0.01 + 0.9^(k-1) * 1
  auto closed = [](int k) {
    double v = 0.0;
    for (int i = 0; i < k - 1; ++i) v -= 0.01 * std::pow(0.9, i);
    return v + std::pow(0.9, k - 1);
  };
  CHECK(vi.values[3] == doctest::Approx(closed(1)).epsilon(1e-10));
  CHECK(vi.values[0] == doctest::Approx(closed(4)).epsilon(1e-10));
  CHECK(vi.values[4] == 0.0);
  CHECK(vi.greedy_action[0] == static_cast<int>(Action::kRight));
}

TEST_CASE("bfs distances") {
  auto maze = parse_maze("S.#\n..G");
  auto d = bfs_distances(maze, maze.start);
  CHECK(d == std::vector<int>{0, 1, -1, 1, 2, 3});
}
