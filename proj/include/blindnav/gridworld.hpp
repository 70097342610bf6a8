#pragma once

// Deterministic gridworld maze with location-based blindness masks.
//
// Cells are indexed row-major from the top-left corner:
//   index = row * width + col.
//
// .maze files: rectangular ASCII, '#' wall, '.' free, 'S' start, 'G' goal.
// .mask files: same grid shape, 'B' masked, '.' elsewhere.
// Both accept LF or CRLF line endings and reject tabs.

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blindnav::gridworld {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;

inline constexpr double kGoalReward = 1.0;
inline constexpr double kStepReward = -0.01;
inline constexpr double kWallReward = -0.02;
inline constexpr int kDefaultMaxEpisodeSteps = 150;

const char* action_name(int action);

class MazeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MazeSpec {
  std::string name;
  int width = 0;
  int height = 0;
  std::vector<bool> walls;  // row-major, width * height
  Cell start;
  Cell goal;
  int max_episode_steps = kDefaultMaxEpisodeSteps;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.col >= 0 && c.row < height && c.col < width;
  }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * width + c.col;
  }
  Cell cell(std::size_t index) const {
    return {static_cast<int>(index / width), static_cast<int>(index % width)};
  }
  bool is_wall(Cell c) const { return walls[index(c)]; }
};

MazeSpec parse_maze(std::string_view text, std::string name = "");
MazeSpec load_maze(const std::filesystem::path& path);

struct Mask {
  std::string name;
  std::vector<std::size_t> cells;  // sorted cell indices

  bool contains(std::size_t index) const;
  bool empty() const { return cells.empty(); }
};

Mask parse_mask(std::string_view text, const MazeSpec& maze,
                std::string name = "");
Mask load_mask(const std::filesystem::path& path, const MazeSpec& maze);
bool pairwise_disjoint(std::span<const Mask> masks);

struct Observation {
  bool blind = false;
  std::size_t index = 0;  // meaningful only when visible

  static Observation visible(std::size_t i) { return {false, i}; }
  static Observation blinded() { return {true, 0}; }
  std::vector<double> one_hot(std::size_t dim) const;
  bool operator==(const Observation&) const = default;
};

Observation observe(const MazeSpec& maze, Cell cell,
                    std::span<const Mask> active_masks);

struct Move {
  Cell next;
  double reward = 0.0;
  bool reached_goal = false;
};

/// Pure transition: bumping a wall or the boundary keeps the cell.
Move apply_action(const MazeSpec& maze, Cell cell, int action);

struct StepResult {
  Cell cell;
  double reward = 0.0;
  bool reached_goal = false;
  bool truncated = false;
  bool done() const { return reached_goal || truncated; }
};

class Environment {
 public:
  explicit Environment(const MazeSpec& maze) : maze_(&maze) { reset(); }

  Cell reset();
  StepResult step(int action);

  Cell cell() const { return cell_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  const MazeSpec& maze() const { return *maze_; }

 private:
  const MazeSpec* maze_;
  Cell cell_;
  int steps_ = 0;
  bool done_ = false;
};

/// Shortest step counts from `from` to every cell; -1 where unreachable.
std::vector<int> bfs_distances(const MazeSpec& maze, Cell from);
int bfs_optimal_length(const MazeSpec& maze);

/// One shortest path start..goal (inclusive), ties broken by action order.
std::vector<Cell> canonical_optimal_path(const MazeSpec& maze);

/// Mask over the first k cells after the start on the canonical path.
Mask prefix_mask(const MazeSpec& maze, int k);

/// Largest number of masked cells visited by any shortest start->goal path.
int masked_optimal_steps(const MazeSpec& maze, const Mask& mask);

struct ValueIterationResult {
  std::vector<double> values;  // per cell; walls and goal hold 0
  std::vector<int> greedy_action;
  std::optional<int> greedy_episode_length;  // empty if greedy never arrives
  int sweeps = 0;
};

/// Tabular value iteration over the true maze dynamics and rewards.
ValueIterationResult value_iteration(const MazeSpec& maze, double gamma,
                                     double tolerance = 1e-12);

}  // namespace blindnav::gridworld
