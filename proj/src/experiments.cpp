#include "blindnav/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "blindnav/agent.hpp"

namespace blindnav::experiments {

namespace fs = std::filesystem;
using training::ConfigError;

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> out;
  for (int n = lo; n <= hi; ++n) out.push_back(n);
  return out;
}

std::vector<gridworld::Mask> load_masks(const SweepConfig& config,
                                        const gridworld::MazeSpec& maze) {
  std::vector<gridworld::Mask> masks;
  for (const auto& path : config.mask_paths)
    masks.push_back(gridworld::load_mask(path, maze));
  return masks;
}

std::string maze_id(const gridworld::MazeSpec& maze) {
  auto name = fs::path(maze.name).stem().string();
  return name.empty() ? "maze" : name;
}

double stddev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::kSwitching: return "switching";
    case Experiment::kMaxBlind: return "maxblind";
    case Experiment::kNoMask: return "nomask";
    case Experiment::kPerMask: return "permask";
  }
  return "unknown";
}

Experiment parse_experiment(const std::string& name) {
  for (auto e : {Experiment::kSwitching, Experiment::kMaxBlind,
                 Experiment::kNoMask, Experiment::kPerMask})
    if (to_string(e) == name) return e;
  throw ConfigError("unknown experiment '" + name +
                    "' (expected switching, maxblind, nomask or permask)");
}

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

SweepConfig SweepConfig::defaults(Experiment e, const fs::path& data_dir) {
  SweepConfig c;
  c.experiment = e;
  const fs::path mazes = data_dir / "mazes";
  const std::vector<fs::path> benchmark_masks = {
      mazes / "benchmark_room.mask", mazes / "benchmark_zigzag.mask",
      mazes / "benchmark_forks.mask"};
  switch (e) {
    case Experiment::kSwitching:
      c.horizons = range(1, 12);
      c.ps = {0.5};
      c.base.total_steps = 60000;
      c.eval_epsilon = 0.05;
      c.eval_episodes = 20;
      c.maze_path = mazes / "benchmark.maze";
      c.mask_paths = benchmark_masks;
      break;
    case Experiment::kMaxBlind:
    case Experiment::kNoMask:
      c.horizons = range(1, 25);
      c.ps = {0.0, 0.5};
      c.base.total_steps = 45000;
      c.eval_epsilon = 0.0;
      c.eval_episodes = 1;
      c.maze_path = mazes / "zigzag.maze";
      break;
    case Experiment::kPerMask:
      c.horizons = range(1, 12);
      c.ps = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      c.seeds = {0};
      c.base.total_steps = 60000;
      c.eval_epsilon = 0.05;
      c.eval_episodes = 20;
      c.maze_path = mazes / "benchmark.maze";
      c.mask_paths = benchmark_masks;
      break;
  }
  return c;
}

std::vector<SweepCell> expand(const SweepConfig& config) {
  std::vector<SweepCell> cells;
  for (int n : config.horizons)
    for (double p : config.ps)
      for (auto seed : config.seeds) cells.push_back({n, p, seed});
  return cells;
}

training::TrainConfig cell_train_config(const SweepConfig& config,
                                        const SweepCell& cell) {
  training::TrainConfig t = config.base;
  t.horizon = cell.horizon;
  t.p = cell.p;
  t.seed = cell.seed;
  t.eval_epsilon = config.eval_epsilon;
  t.validate();
  return t;
}

double ExperimentRecord::mean_length() const {
  if (episode_lengths.empty()) return 0.0;
  return std::accumulate(episode_lengths.begin(), episode_lengths.end(), 0.0) /
         static_cast<double>(episode_lengths.size());
}

int ExperimentRecord::lowest_length() const {
  return episode_lengths.empty()
             ? 0
             : *std::min_element(episode_lengths.begin(), episode_lengths.end());
}

std::string hash_text(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

std::string training_hash(const training::TrainConfig& config,
                          const gridworld::MazeSpec& maze) {
  std::string text = config.to_text();
  text += "maze " + std::to_string(maze.width) + "x" +
          std::to_string(maze.height) + " start " +
          std::to_string(maze.index(maze.start)) + " goal " +
          std::to_string(maze.index(maze.goal)) + " cap " +
          std::to_string(maze.max_episode_steps) + "\n";
  for (bool w : maze.walls) text.push_back(w ? '#' : '.');
  return hash_text(text);
}

double EvalOutcome::mean() const {
  if (lengths.empty()) return 0.0;
  return std::accumulate(lengths.begin(), lengths.end(), 0.0) /
         static_cast<double>(lengths.size());
}

EvalOutcome evaluate(const gridworld::MazeSpec& maze,
                     const nets::ModelParams& params,
                     std::span<const gridworld::Mask> masks, double gamma,
                     double epsilon, int episodes, std::uint64_t seed) {
  Rng rng(seed);
  EvalOutcome out;
  for (int e = 0; e < episodes; ++e) {
    auto r = agent::run_episode(maze, params, masks, gamma, epsilon, rng);
    out.lengths.push_back(r.length);
    out.reached_goal.push_back(r.reached_goal);
  }
  return out;
}

BlindSweep max_blind_sweep(const gridworld::MazeSpec& maze,
                           const nets::ModelParams& params, double gamma,
                           double epsilon, std::uint64_t seed) {
  const int optimal = gridworld::bfs_optimal_length(maze);
  BlindSweep sweep;
  Rng rng(seed);
  auto control = agent::run_episode(maze, params, {}, gamma, epsilon, rng);
  sweep.no_mask_length = control.length;
  sweep.lengths.push_back(control.length);
  sweep.reached_goal.push_back(control.reached_goal);
  for (int k = 1; k <= optimal; ++k) {
    const auto mask = gridworld::prefix_mask(maze, k);
    auto r = agent::run_episode(maze, params, std::span(&mask, 1), gamma,
                                epsilon, rng);
    sweep.lengths.push_back(r.length);
    sweep.reached_goal.push_back(r.reached_goal);
    if (!r.reached_goal) break;
    sweep.max_solved = k;
  }
  return sweep;
}

nets::ModelParams trained_agent(const training::TrainConfig& config,
                                const gridworld::MazeSpec& maze,
                                const std::optional<fs::path>& checkpoint_dir) {
  std::optional<fs::path> file;
  if (checkpoint_dir) {
    file = *checkpoint_dir / (training_hash(config, maze) + ".json");
    if (fs::exists(*file)) return nets::load_checkpoint(*file);
  }
  auto result = training::train(config, maze);
  if (file) {
    fs::create_directories(*checkpoint_dir);
    const fs::path tmp = file->string() + ".tmp" +
                         std::to_string(std::hash<std::thread::id>{}(
                             std::this_thread::get_id()));
    nets::save_checkpoint(result.online, tmp);
    fs::rename(tmp, *file);
  }
  return std::move(result.online);
}

std::vector<ExperimentRecord> run_cell(const SweepConfig& config,
                                       const SweepCell& cell,
                                       const std::optional<fs::path>& checkpoint_dir) {
  const auto maze = gridworld::load_maze(config.maze_path);
  const auto masks = load_masks(config, maze);
  const auto train_cfg = cell_train_config(config, cell);
  const std::string hash = training_hash(train_cfg, maze);
  const auto params = trained_agent(train_cfg, maze, checkpoint_dir);

  ExperimentRecord proto;
  proto.experiment = to_string(config.experiment);
  proto.maze = maze_id(maze);
  proto.horizon = cell.horizon;
  proto.p = cell.p;
  proto.seed = cell.seed;
  proto.eval_epsilon = config.eval_epsilon;
  proto.config_hash = hash;

  auto eval_seed = [&](const std::string& mask) {
    return Rng::splitmix(fnv1a(hash + "/" + mask) ^ cell.seed);
  };
  auto record = [&](const std::string& mask_name,
                    std::span<const gridworld::Mask> active) {
    ExperimentRecord r = proto;
    r.mask = mask_name;
    auto out = evaluate(maze, params, active, train_cfg.gamma,
                        config.eval_epsilon, config.eval_episodes,
                        eval_seed(mask_name));
    r.episode_lengths = std::move(out.lengths);
    r.reached_goal = std::move(out.reached_goal);
    return r;
  };

  std::vector<ExperimentRecord> records;
  switch (config.experiment) {
    case Experiment::kSwitching: {
      if (!gridworld::pairwise_disjoint(masks))
        throw ConfigError("switching benchmark masks must be disjoint");
      for (const auto& m : masks)
        if (m.contains(maze.index(maze.start)))
          throw ConfigError("mask " + m.name + " covers the start cell");
      records.push_back(record("all", masks));
      break;
    }
    case Experiment::kNoMask:
      records.push_back(record("none", {}));
      break;
    case Experiment::kPerMask:
      for (const auto& m : masks) records.push_back(record(m.name, std::span(&m, 1)));
      break;
    case Experiment::kMaxBlind: {
      auto sweep = max_blind_sweep(maze, params, train_cfg.gamma,
                                   config.eval_epsilon, eval_seed("prefix"));
      for (std::size_t k = 0; k < sweep.lengths.size(); ++k) {
        ExperimentRecord r = proto;
        r.mask = k == 0 ? "none" : "prefix" + std::to_string(k);
        r.episode_lengths = {sweep.lengths[k]};
        r.reached_goal = {sweep.reached_goal[k]};
        r.max_blind_solved = sweep.max_solved;
        records.push_back(std::move(r));
      }
      break;
    }
  }
  return records;
}

SweepResult run_sweep(const SweepConfig& config, const fs::path& out_dir,
                      const ProgressCallback& progress) {
  const auto cells = expand(config);
  if (cells.empty()) throw ConfigError("sweep has no cells");
  for (const auto& cell : cells) cell_train_config(config, cell);  // validate

  const fs::path dir = out_dir / to_string(config.experiment);
  const fs::path checkpoints = out_dir / "checkpoints";
  fs::create_directories(dir);

  std::vector<std::vector<ExperimentRecord>> per_cell(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t finished = 0;
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        per_cell[i] = run_cell(config, cells[i], checkpoints);
        const auto& c = cells[i];
        std::ofstream out(dir / (std::to_string(c.horizon) + "_" +
                                 format_p(c.p) + "_" + std::to_string(c.seed) +
                                 ".csv"));
        write_records_csv(out, per_cell[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      std::lock_guard lock(progress_mutex);
      ++finished;
      if (progress) progress(cells[i], finished, cells.size());
    }
  };
  const int jobs = std::max(1, std::min<int>(config.jobs,
                                             static_cast<int>(cells.size())));
  {
    std::vector<std::jthread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SweepResult result;
  result.directory = dir;
  for (auto& recs : per_cell)
    for (auto& r : recs) result.records.push_back(std::move(r));

  {
    std::ofstream summary(dir / "summary.csv");
    write_summary_csv(summary, summarize(result.records));
  }

  nlohmann::json manifest;
  manifest["experiment"] = to_string(config.experiment);
  manifest["code_version"] = kCodeVersion;
  manifest["maze"] = config.maze_path.string();
  std::vector<std::string> mask_names;
  for (const auto& m : config.mask_paths) mask_names.push_back(m.string());
  manifest["masks"] = mask_names;
  manifest["eval_epsilon"] = config.eval_epsilon;
  manifest["eval_episodes"] = config.eval_episodes;
  manifest["base_config"] = config.base.to_text();
  manifest["config_hash"] = hash_text(config.base.to_text() +
                                      to_string(config.experiment));
  auto& jcells = manifest["cells"] = nlohmann::json::array();
  const auto maze = gridworld::load_maze(config.maze_path);
  for (const auto& c : cells)
    jcells.push_back({{"N", c.horizon},
                      {"p", c.p},
                      {"seed", c.seed},
                      {"config_hash",
                       training_hash(cell_train_config(config, c), maze)}});
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return result;
}

SweepResult run_switching_benchmark(const SweepConfig& config,
                                    const fs::path& out_dir) {
  SweepConfig c = config;
  c.experiment = Experiment::kSwitching;
  return run_sweep(c, out_dir);
}

SweepResult run_max_blind_sweep(const SweepConfig& config,
                                const fs::path& out_dir) {
  SweepConfig c = config;
  c.experiment = Experiment::kMaxBlind;
  return run_sweep(c, out_dir);
}

SweepResult run_no_mask_control(const SweepConfig& config,
                                const fs::path& out_dir) {
  SweepConfig c = config;
  c.experiment = Experiment::kNoMask;
  return run_sweep(c, out_dir);
}

SweepResult run_per_mask_eval(const SweepConfig& config,
                              const fs::path& out_dir) {
  SweepConfig c = config;
  c.experiment = Experiment::kPerMask;
  return run_sweep(c, out_dir);
}

void write_records_csv(std::ostream& out,
                       std::span<const ExperimentRecord> records) {
  out << "experiment,maze,mask,N,p,seed,eval_epsilon,episode,length,"
         "reached_goal,max_blind_solved,config_hash\n";
  for (const auto& r : records)
    for (std::size_t e = 0; e < r.episode_lengths.size(); ++e)
      out << r.experiment << ',' << r.maze << ',' << r.mask << ','
          << r.horizon << ',' << format_p(r.p) << ',' << r.seed << ','
          << format_p(r.eval_epsilon) << ',' << e << ','
          << r.episode_lengths[e] << ',' << (r.reached_goal[e] ? 1 : 0) << ','
          << r.max_blind_solved << ',' << r.config_hash << '\n';
}

std::vector<ExperimentRecord> read_records_csv(std::istream& in) {
  std::vector<ExperimentRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 12) throw std::runtime_error("malformed results row: " + line);
    const int horizon = std::stoi(f[3]);
    const double p = std::stod(f[4]);
    const auto seed = std::stoull(f[5]);
    const bool same = !out.empty() && out.back().experiment == f[0] &&
                      out.back().maze == f[1] && out.back().mask == f[2] &&
                      out.back().horizon == horizon && out.back().p == p &&
                      out.back().seed == seed && out.back().config_hash == f[11] &&
                      std::stoul(f[7]) == out.back().episode_lengths.size();
    if (!same) {
      ExperimentRecord r;
      r.experiment = f[0];
      r.maze = f[1];
      r.mask = f[2];
      r.horizon = horizon;
      r.p = p;
      r.seed = seed;
      r.eval_epsilon = std::stod(f[6]);
      r.max_blind_solved = std::stoi(f[10]);
      r.config_hash = f[11];
      out.push_back(std::move(r));
    }
    out.back().episode_lengths.push_back(std::stoi(f[8]));
    out.back().reached_goal.push_back(f[9] == "1");
  }
  return out;
}

std::vector<SummaryRow> summarize(std::span<const ExperimentRecord> records) {
  // (experiment, maze, mask, N, p, metric) -> per-run values
  using Key = std::tuple<std::string, std::string, std::string, int,
                         std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : records) {
    const std::string p = format_p(r.p);
    if (r.experiment == "maxblind") {
      if (r.mask != "none") continue;
      groups[{r.experiment, r.maze, "prefix", r.horizon, p, "max_blind"}]
          .push_back(r.max_blind_solved);
      groups[{r.experiment, r.maze, "none", r.horizon, p, "episode_length"}]
          .push_back(r.mean_length());
    } else if (r.experiment == "permask") {
      const double lowest = r.lowest_length();
      groups[{r.experiment, r.maze, r.mask, r.horizon, p, "episode_length"}]
          .push_back(lowest);
      groups[{r.experiment, r.maze, r.mask, r.horizon, "all", "episode_length"}]
          .push_back(lowest);
    } else {
      groups[{r.experiment, r.maze, r.mask, r.horizon, p, "episode_length"}]
          .push_back(r.mean_length());
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : groups) {
    SummaryRow row;
    std::tie(row.experiment, row.maze, row.mask, row.horizon, row.p,
             row.metric) = key;
    row.runs = values.size();
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    row.std = stddev(values, row.mean);
    row.min = *std::min_element(values.begin(), values.end());
    row.max = *std::max_element(values.begin(), values.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << "experiment,maze,mask,N,p,metric,runs,mean,std,min,max\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << r.maze << ',' << r.mask << ',' << r.horizon
        << ',' << r.p << ',' << r.metric << ',' << r.runs << ','
        << format_double(r.mean) << ',' << format_double(r.std) << ','
        << format_double(r.min) << ',' << format_double(r.max) << '\n';
}

}  // namespace blindnav::experiments
