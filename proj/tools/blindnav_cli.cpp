// blindnav: train, evaluate and sweep open-loop DQN agents on gridworld mazes.
//
// Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blindnav/agent.hpp"
#include "blindnav/experiments.hpp"
#include "blindnav/gridworld.hpp"
#include "blindnav/nets.hpp"
#include "blindnav/training.hpp"

#ifndef BLINDNAV_DATA_DIR
#define BLINDNAV_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace blindnav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw training::ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits out the CLI-only `maze` key; everything else is a TrainConfig field.
training::TrainConfig load_train_config(const fs::path& path,
                                        std::string& maze_from_file) {
  std::istringstream in(read_text(path));
  std::string line, rest;
  while (std::getline(in, line)) {
    std::string body = line.substr(0, line.find('#'));
    auto eq = body.find('=');
    if (eq != std::string::npos) {
      std::string key = body.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      if (key == "maze") {
        std::string value = body.substr(eq + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        value.erase(value.find_last_not_of(" \t\r") + 1);
        maze_from_file = value;
        continue;
      }
    }
    rest += line + "\n";
  }
  return training::TrainConfig::parse(rest);
}

struct TrainArgs {
  std::string config;
  std::string maze;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::optional<double> p;
  std::optional<std::int64_t> steps;
};

int cmd_train(const TrainArgs& a) {
  std::string maze_path = a.maze;
  training::TrainConfig cfg;
  if (!a.config.empty()) {
    std::string from_file;
    cfg = load_train_config(a.config, from_file);
    if (maze_path.empty() && !from_file.empty()) {
      fs::path p = from_file;
      maze_path = p.is_relative() ? (fs::path(a.config).parent_path() / p).string()
                                  : from_file;
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.horizon) cfg.horizon = *a.horizon;
  if (a.p) cfg.p = *a.p;
  if (a.steps) cfg.total_steps = *a.steps;
  cfg.validate();
  if (maze_path.empty())
    throw training::ConfigError("no maze given (use --maze or 'maze = ...')");
  const auto maze = gridworld::load_maze(maze_path);

  const fs::path out = a.out;
  fs::create_directories(out);
  std::ofstream metrics(out / "metrics.csv");
  training::write_metrics_header(metrics);
  auto result = training::train(cfg, maze, [&](const training::EpisodeMetrics& m) {
    training::write_metrics_row(metrics, m);
  });
  nets::save_checkpoint(result.online, out / "checkpoint.json");

  nlohmann::json manifest = {
      {"code_version", experiments::kCodeVersion},
      {"maze", maze_path},
      {"resolved_config", cfg.to_text()},
      {"config_hash", experiments::training_hash(cfg, maze)},
      {"episodes", result.metrics.size()}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';

  std::cout << cfg.to_text() << "episodes: " << result.metrics.size() << '\n'
            << "checkpoint: " << (out / "checkpoint.json").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string maze;
  std::vector<std::string> masks;
  double epsilon = 0.0;
  double gamma = 0.99;
  int episodes = 1;
  bool record = false;
  std::string record_file = "episodes.jsonl";
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto params = nets::load_checkpoint(a.checkpoint);
  const auto maze = gridworld::load_maze(a.maze);
  if (params.config().observation_dim != maze.cell_count())
    throw training::ConfigError("checkpoint expects " +
                                std::to_string(params.config().observation_dim) +
                                " cells, maze has " +
                                std::to_string(maze.cell_count()));
  std::vector<gridworld::Mask> masks;
  for (const auto& m : a.masks) masks.push_back(gridworld::load_mask(m, maze));

  Rng rng(a.seed);
  std::vector<int> lengths;
  int reached = 0;
  std::ofstream rec;
  if (a.record) rec.open(a.record_file);
  for (int e = 0; e < a.episodes; ++e) {
    auto r = agent::run_episode(maze, params, masks, a.gamma, a.epsilon, rng,
                                a.record);
    lengths.push_back(r.length);
    reached += r.reached_goal ? 1 : 0;
    if (a.record) agent::write_recording(rec, r);
  }
  double mean = 0.0;
  for (int l : lengths) mean += l;
  mean /= static_cast<double>(lengths.size());
  std::cout << "episodes: " << lengths.size() << '\n'
            << "mean length: " << mean << '\n'
            << "min length: " << *std::min_element(lengths.begin(), lengths.end())
            << '\n'
            << "max length: " << *std::max_element(lengths.begin(), lengths.end())
            << '\n'
            << "goal reached: " << reached << '/' << lengths.size() << '\n';
  if (a.record) std::cout << "recording: " << a.record_file << '\n';
  return kExitOk;
}

struct SweepArgs {
  std::string experiment;
  std::string out = "results";
  std::string data_dir = BLINDNAV_DATA_DIR;
  int jobs = 1;
  std::optional<std::int64_t> steps;
  std::vector<int> horizons;
  std::vector<double> ps;
  std::vector<std::uint64_t> seeds;
  std::optional<int> eval_episodes;
  std::string config;
};

int cmd_sweep(const SweepArgs& a) {
  auto cfg = experiments::SweepConfig::defaults(
      experiments::parse_experiment(a.experiment), a.data_dir);
  if (!a.config.empty()) {
    std::string ignored;
    cfg.base = load_train_config(a.config, ignored);
  }
  if (a.steps) cfg.base.total_steps = *a.steps;
  if (!a.horizons.empty()) cfg.horizons = a.horizons;
  if (!a.ps.empty()) cfg.ps = a.ps;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.eval_episodes) cfg.eval_episodes = *a.eval_episodes;
  cfg.jobs = a.jobs;
  auto result = experiments::run_sweep(
      cfg, a.out,
      [](const experiments::SweepCell& c, std::size_t done, std::size_t total) {
        std::cerr << "[" << done << "/" << total << "] N=" << c.horizon
                  << " p=" << experiments::format_p(c.p) << " seed=" << c.seed
                  << '\n';
      });
  std::cout << "summary: " << (result.directory / "summary.csv").string() << '\n';
  return kExitOk;
}

int cmd_maze_check(const std::string& file, const std::vector<std::string>& masks) {
  const auto maze = gridworld::load_maze(file);
  std::cout << "size: " << maze.width << "x" << maze.height << '\n'
            << "optimal path: " << gridworld::bfs_optimal_length(maze) << '\n';
  std::vector<gridworld::Mask> loaded;
  for (const auto& m : masks) {
    loaded.push_back(gridworld::load_mask(m, maze));
    std::cout << "mask " << loaded.back().name << ": "
              << loaded.back().cells.size() << " cells, "
              << gridworld::masked_optimal_steps(maze, loaded.back())
              << " masked optimal steps\n";
  }
  if (loaded.size() > 1)
    std::cout << "masks disjoint: "
              << (gridworld::pairwise_disjoint(loaded) ? "yes" : "no") << '\n';
  return kExitOk;
}

int cmd_oracle(const std::string& file, double gamma) {
  const auto maze = gridworld::load_maze(file);
  const auto vi = gridworld::value_iteration(maze, gamma);
  if (vi.greedy_episode_length)
    std::cout << "optimal episode length: " << *vi.greedy_episode_length << '\n';
  else
    std::cout << "optimal episode length: unreachable\n";
  std::cout << "value iteration sweeps: " << vi.sweeps << '\n' << "values:\n";
  for (int r = 0; r < maze.height; ++r) {
    for (int c = 0; c < maze.width; ++c) {
      const gridworld::Cell cell{r, c};
      if (maze.is_wall(cell))
        std::cout << std::setw(8) << "#";
      else
        std::cout << std::setw(8) << std::fixed << std::setprecision(3)
                  << vi.values[maze.index(cell)];
    }
    std::cout << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-loop DQN agents for blind gridworld navigation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train an agent");
  train->add_option("--config", train_args.config, "Flat key = value config file");
  train->add_option("--maze", train_args.maze, "Maze file (overrides config)");
  train->add_option("--seed", train_args.seed, "PRNG seed");
  train->add_option("--n", train_args.horizon, "N-step horizon");
  train->add_option("--p", train_args.p, "Blind injection level");
  train->add_option("--steps", train_args.steps, "Total global steps");
  train->add_option("--out", train_args.out, "Output directory")
      ->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--maze", eval_args.maze)->required();
  eval->add_option("--masks", eval_args.masks, "Mask files active together");
  eval->add_option("--epsilon", eval_args.epsilon)->capture_default_str();
  eval->add_option("--gamma", eval_args.gamma)->capture_default_str();
  eval->add_option("--episodes", eval_args.episodes)->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_args.seed)->capture_default_str();
  eval->add_flag("--record", eval_args.record, "Write episode recordings");
  eval->add_option("--record-file", eval_args.record_file)->capture_default_str();

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep");
  sweep->add_option("--experiment", sweep_args.experiment)
      ->required()
      ->check(CLI::IsMember({"switching", "maxblind", "nomask", "permask"}));
  sweep->add_option("--out", sweep_args.out)->capture_default_str();
  sweep->add_option("--jobs", sweep_args.jobs)->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep->add_option("--data-dir", sweep_args.data_dir)->capture_default_str();
  sweep->add_option("--config", sweep_args.config, "Base training config");
  sweep->add_option("--steps", sweep_args.steps, "Global steps per agent");
  sweep->add_option("--horizons", sweep_args.horizons, "N values");
  sweep->add_option("--ps", sweep_args.ps, "p values");
  sweep->add_option("--seeds", sweep_args.seeds, "Seeds");
  sweep->add_option("--eval-episodes", sweep_args.eval_episodes);

  std::string maze_file;
  std::vector<std::string> maze_masks;
  auto* maze = app.add_subcommand("maze", "Maze utilities");
  maze->require_subcommand(1);
  auto* check = maze->add_subcommand("check", "Validate a maze");
  check->add_option("file", maze_file)->required();
  check->add_option("--masks", maze_masks);

  std::string oracle_maze;
  double oracle_gamma = 0.99;
  auto* oracle = app.add_subcommand("oracle", "Tabular value iteration");
  oracle->add_option("--maze", oracle_maze)->required();
  oracle->add_option("--gamma", oracle_gamma)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*check) return cmd_maze_check(maze_file, maze_masks);
    if (*oracle) return cmd_oracle(oracle_maze, oracle_gamma);
  } catch (const training::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gridworld::MazeError& e) {
    std::cerr << "maze error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
