#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "blindnav/experiments.hpp"

using namespace blindnav;
using namespace blindnav::experiments;
namespace fs = std::filesystem;

namespace {

const fs::path kData = BLINDNAV_DATA_DIR;

ExperimentRecord make_record(std::string experiment, std::string mask, int n,
                             double p, std::uint64_t seed,
                             std::vector<int> lengths, int max_blind = -1) {
  ExperimentRecord r;
  r.experiment = std::move(experiment);
  r.maze = "m";
  r.mask = std::move(mask);
  r.horizon = n;
  r.p = p;
  r.seed = seed;
  r.eval_epsilon = 0.05;
  for (int l : lengths) r.reached_goal.push_back(l < 150);
  r.episode_lengths = std::move(lengths);
  r.max_blind_solved = max_blind;
  r.config_hash = "00ff";
  return r;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const fs::path& dir, const std::string& name,
                    const std::string& text) {
  fs::create_directories(dir);
  std::ofstream(dir / name) << text;
  return dir / name;
}

}  // namespace

TEST_CASE("experiment names") {
  for (auto e : {Experiment::kSwitching, Experiment::kMaxBlind,
                 Experiment::kNoMask, Experiment::kPerMask})
    CHECK(parse_experiment(to_string(e)) == e);
  CHECK_THROWS_AS(parse_experiment("figure6"), training::ConfigError);
}

TEST_CASE("default sweeps") {
  auto sw = SweepConfig::defaults(Experiment::kSwitching, kData);
  CHECK(sw.horizons.size() == 12);
  CHECK(sw.ps == std::vector<double>{0.5});
  CHECK(sw.seeds.size() == 3);
  CHECK(sw.base.total_steps == 60000);
  CHECK(sw.eval_epsilon == 0.05);
  CHECK(sw.mask_paths.size() == 3);
  CHECK(expand(sw).size() == 36);

  auto mb = SweepConfig::defaults(Experiment::kMaxBlind, kData);
  CHECK(mb.horizons.back() == 25);
  CHECK(mb.ps == std::vector<double>{0.0, 0.5});
  CHECK(mb.base.total_steps == 45000);
  CHECK(mb.eval_epsilon == 0.0);
  CHECK(expand(mb).size() == 150);

  auto pm = SweepConfig::defaults(Experiment::kPerMask, kData);
  CHECK(pm.ps.size() == 9);
  CHECK(expand(pm).size() == 108);

  auto cell = expand(sw)[5];
  auto t = cell_train_config(sw, cell);
  CHECK(t.horizon == cell.horizon);
  CHECK(t.seed == cell.seed);
  CHECK(t.eval_epsilon == 0.05);

  // p/N > 1 is rejected before any training starts.
  sw.ps = {1.5};
  sw.horizons = {1};
  CHECK_THROWS_AS(run_sweep(sw, fresh_dir("blindnav_bad_sweep")), training::ConfigError);
}

TEST_CASE("training hash tracks config and maze") {
  training::TrainConfig a;
  auto maze = gridworld::parse_maze("S.\n.G");
  auto other = gridworld::parse_maze("S#\n.G");
  const auto h = training_hash(a, maze);
  CHECK(h.size() == 16);
  CHECK(training_hash(a, maze) == h);
  CHECK(training_hash(a, other) != h);
  a.seed = 1;
  CHECK(training_hash(a, maze) != h);
  CHECK(hash_text("") == "cbf29ce484222325");
  CHECK(hash_text("a") == "af63dc4c8601ec8c");
}

TEST_CASE("records round-trip through CSV") {
  std::vector<ExperimentRecord> recs{
      make_record("switching", "all", 7, 0.5, 2, {34, 36, 150}),
      make_record("maxblind", "prefix3", 5, 0.0, 0, {40}, 12),
      make_record("permask", "benchmark_room", 1, 0.1, 0, {20, 21})};
  std::stringstream ss;
  write_records_csv(ss, recs);
  auto back = read_records_csv(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].experiment == recs[i].experiment);
    CHECK(back[i].mask == recs[i].mask);
    CHECK(back[i].horizon == recs[i].horizon);
    CHECK(back[i].p == recs[i].p);
    CHECK(back[i].seed == recs[i].seed);
    CHECK(back[i].episode_lengths == recs[i].episode_lengths);
    CHECK(back[i].reached_goal == recs[i].reached_goal);
    CHECK(back[i].max_blind_solved == recs[i].max_blind_solved);
    CHECK(back[i].config_hash == recs[i].config_hash);
  }
  std::stringstream bad("header\n1,2,3\n");
  CHECK_THROWS(read_records_csv(bad));
}

TEST_CASE("summaries aggregate per-run values") {
  std::vector<ExperimentRecord> recs{
      make_record("switching", "all", 7, 0.5, 0, {34, 36}),
      make_record("switching", "all", 7, 0.5, 1, {150, 150}),
      make_record("switching", "all", 7, 0.5, 2, {40, 40}),
      make_record("permask", "room", 3, 0.1, 0, {30, 20, 25}),
      make_record("permask", "room", 3, 0.2, 0, {22, 150}),
      make_record("maxblind", "none", 5, 0.5, 0, {40}, 12),
      make_record("maxblind", "prefix1", 5, 0.5, 0, {40}, 12),
      make_record("maxblind", "none", 5, 0.5, 1, {40}, 4)};
  auto rows = summarize(recs);
  auto find = [&](const std::string& exp, const std::string& mask,
                  const std::string& p, const std::string& metric) {
    for (const auto& r : rows)
      if (r.experiment == exp && r.mask == mask && r.p == p && r.metric == metric)
        return r;
    FAIL("missing row ", exp, " ", mask, " ", p);
    return SummaryRow{};
  };
  auto sw = find("switching", "all", "0.5", "episode_length");
  CHECK(sw.runs == 3);
  CHECK(sw.mean == doctest::Approx((35.0 + 150.0 + 40.0) / 3));
  CHECK(sw.min == 35.0);
  CHECK(sw.max == 150.0);
  CHECK(sw.std == doctest::Approx(65.0));

  auto pm = find("permask", "room", "all", "episode_length");
  CHECK(pm.runs == 2);
  CHECK(pm.mean == 21.0);
  CHECK(find("permask", "room", "0.1", "episode_length").mean == 20.0);

  auto mb = find("maxblind", "prefix", "0.5", "max_blind");
  CHECK(mb.runs == 2);
  CHECK(mb.min == 4.0);
  CHECK(mb.max == 12.0);
  CHECK(find("maxblind", "none", "0.5", "episode_length").mean == 40.0);

  std::stringstream out;
  write_summary_csv(out, rows);
  std::string header;
  std::getline(out, header);
  CHECK(header == "experiment,maze,mask,N,p,metric,runs,mean,std,min,max");
}

TEST_CASE("max-blind sweep stops at the first failure") {
  nets::NetConfig cfg{.observation_dim = 4, .num_actions = 4, .hidden_dim = 2,
                      .encoder_hidden_dim = 2};
  // All-zero weights: equal Q values everywhere, so the agent always moves up.
  auto params = nets::ModelParams::zeros(cfg);

  auto corridor = gridworld::parse_maze("G\n.\n.\nS");
  auto ok = max_blind_sweep(corridor, params, 0.99);
  CHECK(ok.max_solved == 3);
  CHECK(ok.no_mask_length == 3);
  CHECK(ok.lengths == std::vector<int>{3, 3, 3, 3});

  auto sideways = gridworld::parse_maze("S...G");
  auto fail = max_blind_sweep(sideways, params, 0.99);
  CHECK(fail.max_solved == 0);
  CHECK(fail.no_mask_length == 150);
  REQUIRE(fail.lengths.size() == 2);
  CHECK_FALSE(fail.reached_goal[1]);
}

TEST_CASE("small sweep writes a reproducible results layout") {
  const auto dir = fresh_dir("blindnav_sweep_test");
  const auto maze = write_file(dir / "in", "small.maze", "S..\n.#.\n..G\n");
  const auto mask = write_file(dir / "in", "corner.mask", "...\n..B\n...\n");

  SweepConfig c = SweepConfig::defaults(Experiment::kPerMask, kData);
  c.horizons = {1, 2};
  c.ps = {0.5};
  c.seeds = {0, 1};
  c.base.total_steps = 300;
  c.base.warmup_steps = 50;
  c.base.batch_size = 4;
  c.base.hidden_dim = 4;
  c.base.encoder_hidden_dim = 4;
  c.eval_episodes = 3;
  c.maze_path = maze;
  c.mask_paths = {mask};
  c.jobs = 2;

  auto first = run_sweep(c, dir / "out");
  CHECK(first.records.size() == 4);
  const auto exp_dir = dir / "out" / "permask";
  CHECK(fs::exists(exp_dir / "1_0.5_0.csv"));
  CHECK(fs::exists(exp_dir / "2_0.5_1.csv"));
  CHECK(fs::exists(exp_dir / "summary.csv"));
  std::size_t checkpoints = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "out" / "checkpoints"))
    ++checkpoints;
  CHECK(checkpoints == 4);

  auto manifest = nlohmann::json::parse(slurp(exp_dir / "manifest.json"));
  CHECK(manifest["code_version"] == kCodeVersion);
  CHECK(manifest["cells"].size() == 4);
  CHECK(manifest["base_config"].get<std::string>().find("total_steps = 300") !=
        std::string::npos);

  // Summary is recomputable from the raw rows.
  std::vector<ExperimentRecord> raw;
  for (const auto& e : fs::directory_iterator(exp_dir)) {
    const auto name = e.path().filename().string();
    if (name == "summary.csv" || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path());
    auto recs = read_records_csv(in);
    raw.insert(raw.end(), recs.begin(), recs.end());
  }
  CHECK(raw.size() == 4);
  std::ostringstream recomputed;
  write_summary_csv(recomputed, summarize(raw));
  CHECK(recomputed.str() == slurp(exp_dir / "summary.csv"));

  // A fresh directory retrains and reproduces every row.
  const auto before = slurp(exp_dir / "2_0.5_1.csv");
  run_sweep(c, dir / "again");
  CHECK(slurp(dir / "again" / "permask" / "2_0.5_1.csv") == before);
  // Cached checkpoints give the same rows too.
  run_sweep(c, dir / "out");
  CHECK(slurp(exp_dir / "2_0.5_1.csv") == before);
  fs::remove_all(dir);
}

TEST_CASE("switching rejects overlapping masks") {
  const auto dir = fresh_dir("blindnav_overlap_test");
  const auto maze = write_file(dir, "m.maze", "S..\n...\n..G\n");
  SweepConfig c = SweepConfig::defaults(Experiment::kSwitching, kData);
  c.horizons = {1};
  c.seeds = {0};
  c.base.total_steps = 10;
  c.maze_path = maze;
  c.mask_paths = {write_file(dir, "a.mask", "...\n.B.\n...\n"),
                  write_file(dir, "b.mask", "...\n.BB\n...\n")};
  CHECK_THROWS_AS(run_cell(c, expand(c)[0]), training::ConfigError);
  c.mask_paths = {write_file(dir, "s.mask", "B..\n...\n...\n")};
  CHECK_THROWS_AS(run_cell(c, expand(c)[0]), training::ConfigError);
  fs::remove_all(dir);
}
