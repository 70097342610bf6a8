#pragma once

// Sweep drivers for the four evaluation settings:
//   switching  benchmark maze, all three disjoint masks active at once
//   maxblind   zigzag maze, growing prefix masks along the optimal path
//   nomask     zigzag maze, no masks (closed-loop control run)
//   permask    benchmark maze, each mask evaluated on its own
//
// Results layout under an output directory:
//   <experiment>/<N>_<p>_<seed>.csv   raw per-episode rows for one cell
//   <experiment>/summary.csv          aggregates recomputable from the above
//   <experiment>/manifest.json        resolved config, hashes, code version
//   checkpoints/<hash>.json           trained agents, reused across sweeps

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blindnav/gridworld.hpp"
#include "blindnav/nets.hpp"
#include "blindnav/training.hpp"

namespace blindnav::experiments {

inline constexpr const char* kCodeVersion = "blindnav 1.0.0";

enum class Experiment { kSwitching, kMaxBlind, kNoMask, kPerMask };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);  // throws ConfigError

struct SweepConfig {
  Experiment experiment = Experiment::kSwitching;
  std::vector<int> horizons;
  std::vector<double> ps;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  training::TrainConfig base;  // N, p and seed are overridden per cell
  int eval_episodes = 20;
  double eval_epsilon = 0.05;
  std::filesystem::path maze_path;
  std::vector<std::filesystem::path> mask_paths;
  int jobs = 1;

  /// Experiment defaults, with mazes resolved against `data_dir`.
  static SweepConfig defaults(Experiment e, const std::filesystem::path& data_dir);
};

struct SweepCell {
  int horizon = 1;
  double p = 0.0;
  std::uint64_t seed = 0;
};

std::vector<SweepCell> expand(const SweepConfig& config);

/// Training configuration for one cell.
training::TrainConfig cell_train_config(const SweepConfig& config,
                                        const SweepCell& cell);

struct ExperimentRecord {
  std::string experiment;
  std::string maze;
  std::string mask;  // mask id, "none", "all" or "prefix<k>"
  int horizon = 0;
  double p = 0.0;
  std::uint64_t seed = 0;
  double eval_epsilon = 0.0;
  std::vector<int> episode_lengths;
  std::vector<bool> reached_goal;
  int max_blind_solved = -1;  // maxblind only
  std::string config_hash;

  double mean_length() const;
  int lowest_length() const;
};

/// FNV-1a over the text, as 16 hex digits.
std::string hash_text(const std::string& text);

/// Hash identifying a trained agent: training config plus maze geometry.
std::string training_hash(const training::TrainConfig& config,
                          const gridworld::MazeSpec& maze);

struct EvalOutcome {
  std::vector<int> lengths;
  std::vector<bool> reached_goal;
  double mean() const;
};

EvalOutcome evaluate(const gridworld::MazeSpec& maze,
                     const nets::ModelParams& params,
                     std::span<const gridworld::Mask> masks, double gamma,
                     double epsilon, int episodes, std::uint64_t seed);

struct BlindSweep {
  int max_solved = 0;             // largest k with the goal reached
  int no_mask_length = 0;         // k = 0 control
  std::vector<int> lengths;       // lengths[k] for k = 0 .. first failure
  std::vector<bool> reached_goal;
};

/// Greedy prefix-mask sweep: k = 1, 2, ... until the first failure or until
/// the whole optimal path is masked.
BlindSweep max_blind_sweep(const gridworld::MazeSpec& maze,
                           const nets::ModelParams& params, double gamma,
                           double epsilon = 0.0, std::uint64_t seed = 0);

/// Trains (or loads from `checkpoint_dir` when a matching file exists).
nets::ModelParams trained_agent(const training::TrainConfig& config,
                                const gridworld::MazeSpec& maze,
                                const std::optional<std::filesystem::path>&
                                    checkpoint_dir);

/// Trains and evaluates one sweep cell.
std::vector<ExperimentRecord> run_cell(
    const SweepConfig& config, const SweepCell& cell,
    const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

struct SweepResult {
  std::vector<ExperimentRecord> records;
  std::filesystem::path directory;
};

using ProgressCallback = std::function<void(const SweepCell&, std::size_t done,
                                            std::size_t total)>;

/// Runs every cell with up to config.jobs concurrent workers and writes the
/// results layout under `out_dir`.
SweepResult run_sweep(const SweepConfig& config,
                      const std::filesystem::path& out_dir,
                      const ProgressCallback& progress = {});

SweepResult run_switching_benchmark(const SweepConfig& config,
                                    const std::filesystem::path& out_dir);
SweepResult run_max_blind_sweep(const SweepConfig& config,
                                const std::filesystem::path& out_dir);
SweepResult run_no_mask_control(const SweepConfig& config,
                                const std::filesystem::path& out_dir);
SweepResult run_per_mask_eval(const SweepConfig& config,
                              const std::filesystem::path& out_dir);

// Raw rows: experiment,maze,mask,N,p,seed,eval_epsilon,episode,length,
//           reached_goal,max_blind_solved,config_hash
void write_records_csv(std::ostream& out,
                       std::span<const ExperimentRecord> records);
std::vector<ExperimentRecord> read_records_csv(std::istream& in);

struct SummaryRow {
  std::string experiment;
  std::string maze;
  std::string mask;
  int horizon = 0;
  std::string p;  // formatted value, or "all" when pooled across p
  std::string metric;  // "episode_length" or "max_blind"
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Per-run values pooled over seeds for each (mask, N, p); for permask also
/// pooled over p. Per-run value: mean episode length (switching, nomask),
/// lowest episode length (permask), largest solved prefix (maxblind).
std::vector<SummaryRow> summarize(std::span<const ExperimentRecord> records);

// Columns: experiment,maze,mask,N,p,metric,runs,mean,std,min,max
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);

std::string format_p(double p);

}  // namespace blindnav::experiments
