#include "blindnav/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace blindnav::gridworld {

namespace {

constexpr Cell kDelta[kNumActions] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

std::string where(const std::string& name, std::size_t line, std::size_t col) {
  std::ostringstream os;
  os << (name.empty() ? "<maze>" : name) << ':' << line + 1 << ':' << col + 1;
  return os.str();
}

// Splits into lines with CR stripped; trailing blank lines are dropped.
std::vector<std::string> grid_lines(std::string_view text,
                                    const std::string& name) {
  std::vector<std::string> lines;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (ch == '\t')
      throw MazeError(where(name, lines.size(), current.size()) +
                      ": tab characters are not allowed");
    if (ch == '\r') continue;
    if (ch == '\n') {
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw MazeError(where(name, 0, 0) + ": empty grid");
  for (std::size_t r = 1; r < lines.size(); ++r)
    if (lines[r].size() != lines[0].size())
      throw MazeError(where(name, r, std::min(lines[r].size(), lines[0].size())) +
                      ": row has " + std::to_string(lines[r].size()) +
                      " columns, expected " + std::to_string(lines[0].size()));
  if (lines[0].empty()) throw MazeError(where(name, 0, 0) + ": empty row");
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MazeError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* action_name(int action) {
  static constexpr const char* kNames[kNumActions] = {"up", "down", "left",
                                                      "right"};
  return action >= 0 && action < kNumActions ? kNames[action] : "invalid";
}

MazeSpec parse_maze(std::string_view text, std::string name) {
  auto lines = grid_lines(text, name);
  MazeSpec maze;
  maze.name = std::move(name);
  maze.height = static_cast<int>(lines.size());
  maze.width = static_cast<int>(lines[0].size());
  maze.walls.assign(maze.cell_count(), false);
  std::optional<Cell> start, goal;
  for (int r = 0; r < maze.height; ++r) {
    for (int c = 0; c < maze.width; ++c) {
      const char ch = lines[r][c];
      switch (ch) {
        case '#':
          maze.walls[maze.index({r, c})] = true;
          break;
        case '.':
          break;
        case 'S':
          if (start)
            throw MazeError(where(maze.name, r, c) + ": duplicate start 'S'");
          start = Cell{r, c};
          break;
        case 'G':
          if (goal)
            throw MazeError(where(maze.name, r, c) + ": duplicate goal 'G'");
          goal = Cell{r, c};
          break;
        default:
          throw MazeError(where(maze.name, r, c) + ": unexpected character '" +
                          std::string(1, ch) + "'");
      }
    }
  }
  if (!start) throw MazeError(where(maze.name, 0, 0) + ": missing start 'S'");
  if (!goal) throw MazeError(where(maze.name, 0, 0) + ": missing goal 'G'");
  maze.start = *start;
  maze.goal = *goal;
  if (bfs_distances(maze, maze.start)[maze.index(maze.goal)] < 0)
    throw MazeError(where(maze.name, goal->row, goal->col) +
                    ": goal is unreachable from start");
  return maze;
}

MazeSpec load_maze(const std::filesystem::path& path) {
  return parse_maze(read_file(path), path.filename().string());
}

bool Mask::contains(std::size_t index) const {
  return std::binary_search(cells.begin(), cells.end(), index);
}

Mask parse_mask(std::string_view text, const MazeSpec& maze, std::string name) {
  auto lines = grid_lines(text, name);
  if (static_cast<int>(lines.size()) != maze.height ||
      static_cast<int>(lines[0].size()) != maze.width)
    throw MazeError(where(name, 0, 0) + ": mask is " +
                    std::to_string(lines[0].size()) + "x" +
                    std::to_string(lines.size()) + ", maze is " +
                    std::to_string(maze.width) + "x" +
                    std::to_string(maze.height));
  Mask mask;
  mask.name = std::move(name);
  for (int r = 0; r < maze.height; ++r) {
    for (int c = 0; c < maze.width; ++c) {
      const char ch = lines[r][c];
      if (ch == 'B')
        mask.cells.push_back(maze.index({r, c}));
      else if (ch != '.')
        throw MazeError(where(mask.name, r, c) + ": unexpected character '" +
                        std::string(1, ch) + "' in mask");
    }
  }
  return mask;
}

Mask load_mask(const std::filesystem::path& path, const MazeSpec& maze) {
  Mask m = parse_mask(read_file(path), maze, path.filename().string());
  m.name = path.stem().string();
  return m;
}

bool pairwise_disjoint(std::span<const Mask> masks) {
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j)
      for (std::size_t cell : masks[i].cells)
        if (masks[j].contains(cell)) return false;
  return true;
}

std::vector<double> Observation::one_hot(std::size_t dim) const {
  if (blind) throw std::logic_error("blind observation has no state vector");
  std::vector<double> v(dim, 0.0);
  v.at(index) = 1.0;
  return v;
}

Observation observe(const MazeSpec& maze, Cell cell,
                    std::span<const Mask> active_masks) {
  const std::size_t i = maze.index(cell);
  for (const Mask& m : active_masks)
    if (m.contains(i)) return Observation::blinded();
  return Observation::visible(i);
}

Move apply_action(const MazeSpec& maze, Cell cell, int action) {
  if (action < 0 || action >= kNumActions)
    throw std::out_of_range("invalid action id " + std::to_string(action));
  const Cell next{cell.row + kDelta[action].row, cell.col + kDelta[action].col};
  if (!maze.in_bounds(next) || maze.is_wall(next)) return {cell, kWallReward, false};
  if (next == maze.goal) return {next, kGoalReward, true};
  return {next, kStepReward, false};
}

Cell Environment::reset() {
  cell_ = maze_->start;
  steps_ = 0;
  done_ = false;
  return cell_;
}

StepResult Environment::step(int action) {
  if (done_) throw std::logic_error("step() called on a finished episode");
  Move m = apply_action(*maze_, cell_, action);
  cell_ = m.next;
  ++steps_;
  StepResult r{cell_, m.reward, m.reached_goal, false};
  if (!r.reached_goal && steps_ >= maze_->max_episode_steps) r.truncated = true;
  done_ = r.done();
  return r;
}

std::vector<int> bfs_distances(const MazeSpec& maze, Cell from) {
  std::vector<int> dist(maze.cell_count(), -1);
  std::deque<Cell> queue{from};
  dist[maze.index(from)] = 0;
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    for (int a = 0; a < kNumActions; ++a) {
      Cell n{c.row + kDelta[a].row, c.col + kDelta[a].col};
      if (!maze.in_bounds(n) || maze.is_wall(n) || dist[maze.index(n)] >= 0)
        continue;
      dist[maze.index(n)] = dist[maze.index(c)] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

int bfs_optimal_length(const MazeSpec& maze) {
  int d = bfs_distances(maze, maze.start)[maze.index(maze.goal)];
  if (d < 0) throw MazeError(maze.name + ": goal is unreachable from start");
  return d;
}

std::vector<Cell> canonical_optimal_path(const MazeSpec& maze) {
  const auto to_goal = bfs_distances(maze, maze.goal);
  if (to_goal[maze.index(maze.start)] < 0)
    throw MazeError(maze.name + ": goal is unreachable from start");
  std::vector<Cell> path{maze.start};
  Cell c = maze.start;
  while (c != maze.goal) {
    for (int a = 0; a < kNumActions; ++a) {
      Cell n{c.row + kDelta[a].row, c.col + kDelta[a].col};
      if (maze.in_bounds(n) && to_goal[maze.index(n)] >= 0 &&
          to_goal[maze.index(n)] == to_goal[maze.index(c)] - 1) {
        c = n;
        break;
      }
    }
    path.push_back(c);
  }
  return path;
}

Mask prefix_mask(const MazeSpec& maze, int k) {
  const auto path = canonical_optimal_path(maze);
  const int length = static_cast<int>(path.size()) - 1;
  if (k < 0 || k > length)
    throw std::out_of_range("prefix mask length " + std::to_string(k) +
                            " outside [0, " + std::to_string(length) + "]");
  Mask m;
  m.name = "prefix" + std::to_string(k);
  for (int i = 1; i <= k; ++i) m.cells.push_back(maze.index(path[i]));
  std::sort(m.cells.begin(), m.cells.end());
  return m;
}

int masked_optimal_steps(const MazeSpec& maze, const Mask& mask) {
  const auto from_start = bfs_distances(maze, maze.start);
  const auto to_goal = bfs_distances(maze, maze.goal);
  const int length = from_start[maze.index(maze.goal)];
  // Longest mask-weighted path through the shortest-path DAG, layer by layer.
  std::vector<int> best(maze.cell_count(), -1);
  best[maze.index(maze.start)] = 0;
  std::vector<std::vector<std::size_t>> layers(length + 1);
  for (std::size_t i = 0; i < maze.cell_count(); ++i)
    if (from_start[i] >= 0 && to_goal[i] >= 0 &&
        from_start[i] + to_goal[i] == length)
      layers[from_start[i]].push_back(i);
  for (int d = 0; d < length; ++d) {
    for (std::size_t i : layers[d]) {
      if (best[i] < 0) continue;
      const int here = best[i] + (mask.contains(i) ? 1 : 0);
      const Cell c = maze.cell(i);
      for (int a = 0; a < kNumActions; ++a) {
        Cell n{c.row + kDelta[a].row, c.col + kDelta[a].col};
        if (!maze.in_bounds(n)) continue;
        const std::size_t j = maze.index(n);
        if (from_start[j] == d + 1 && to_goal[j] >= 0 &&
            from_start[j] + to_goal[j] == length)
          best[j] = std::max(best[j], here);
      }
    }
  }
  return best[maze.index(maze.goal)];
}

ValueIterationResult value_iteration(const MazeSpec& maze, double gamma,
                                     double tolerance) {
  const std::size_t n = maze.cell_count();
  ValueIterationResult out;
  out.values.assign(n, 0.0);
  out.greedy_action.assign(n, 0);
  auto q = [&](std::size_t i, int a) {
    Move m = apply_action(maze, maze.cell(i), a);
    return m.reward + (m.reached_goal ? 0.0 : gamma * out.values[maze.index(m.next)]);
  };
  for (;;) {
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Cell c = maze.cell(i);
      if (maze.is_wall(c) || c == maze.goal) continue;
      double best = q(i, 0);
      for (int a = 1; a < kNumActions; ++a) best = std::max(best, q(i, a));
      delta = std::max(delta, std::abs(best - out.values[i]));
      out.values[i] = best;
    }
    ++out.sweeps;
    if (delta < tolerance || out.sweeps > 100000) break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    int best_a = 0;
    for (int a = 1; a < kNumActions; ++a)
      if (q(i, a) > q(i, best_a)) best_a = a;
    out.greedy_action[i] = best_a;
  }
  Environment env(maze);
  while (!env.done()) {
    StepResult r = env.step(out.greedy_action[maze.index(env.cell())]);
    if (r.reached_goal) out.greedy_episode_length = env.steps();
  }
  return out;
}

}  // namespace blindnav::gridworld
