#include "blindnav/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "blindnav/adam.hpp"
#include "blindnav/agent.hpp"

namespace blindnav::training {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof())
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

Tensor column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor::from({n, 1}, std::move(values));
}

}  // namespace

void TrainConfig::validate() const {
  if (horizon < 1) throw ConfigError("N (horizon) must be >= 1");
  if (p < 0.0) throw ConfigError("p must be >= 0");
  if (p / horizon > 1.0)
    throw ConfigError("p/N must not exceed 1 (p=" + std::to_string(p) +
                      ", N=" + std::to_string(horizon) + ")");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be >= 1");
  if (total_steps < 0 || warmup_steps < 0)
    throw ConfigError("step counts must be non-negative");
  if (train_every < 1) throw ConfigError("train_every must be >= 1");
  for (double e : {epsilon_start, epsilon_end, eval_epsilon})
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilons must lie in [0, 1]");
  if (!(epsilon_decay_fraction >= 0.0))
    throw ConfigError("epsilon_decay_fraction must be >= 0");
  if (hidden_dim == 0 || encoder_hidden_dim == 0)
    throw ConfigError("hidden dimensions must be >= 1");
}

double TrainConfig::epsilon_at(std::int64_t step) const {
  const double decay = epsilon_decay_fraction * static_cast<double>(total_steps);
  if (decay <= 0.0 || static_cast<double>(step) >= decay) return epsilon_end;
  const double frac = static_cast<double>(step) / decay;
  return epsilon_start + frac * (epsilon_end - epsilon_start);
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "N" || key == "horizon") horizon = parse_number<int>(key, value);
  else if (key == "p") p = parse_number<double>(key, value);
  else if (key == "gamma") gamma = parse_number<double>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "tau") tau = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "buffer_capacity") buffer_capacity = parse_number<std::size_t>(key, value);
  else if (key == "total_steps") total_steps = parse_number<std::int64_t>(key, value);
  else if (key == "warmup_steps") warmup_steps = parse_number<std::int64_t>(key, value);
  else if (key == "train_every") train_every = parse_number<int>(key, value);
  else if (key == "epsilon_start") epsilon_start = parse_number<double>(key, value);
  else if (key == "epsilon_end") epsilon_end = parse_number<double>(key, value);
  else if (key == "epsilon_decay_fraction") epsilon_decay_fraction = parse_number<double>(key, value);
  else if (key == "eval_epsilon") eval_epsilon = parse_number<double>(key, value);
  else if (key == "hidden_dim") hidden_dim = parse_number<std::size_t>(key, value);
  else if (key == "encoder_hidden_dim") encoder_hidden_dim = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "N = " << horizon << '\n'
     << "p = " << p << '\n'
     << "gamma = " << gamma << '\n'
     << "learning_rate = " << learning_rate << '\n'
     << "tau = " << tau << '\n'
     << "batch_size = " << batch_size << '\n'
     << "buffer_capacity = " << buffer_capacity << '\n'
     << "total_steps = " << total_steps << '\n'
     << "warmup_steps = " << warmup_steps << '\n'
     << "train_every = " << train_every << '\n'
     << "epsilon_start = " << epsilon_start << '\n'
     << "epsilon_end = " << epsilon_end << '\n'
     << "epsilon_decay_fraction = " << epsilon_decay_fraction << '\n'
     << "eval_epsilon = " << eval_epsilon << '\n'
     << "hidden_dim = " << hidden_dim << '\n'
     << "encoder_hidden_dim = " << encoder_hidden_dim << '\n'
     << "seed = " << seed << '\n';
  return os.str();
}

std::vector<double> compute_targets(const ModelParams& target,
                                    std::span<const std::size_t> states,
                                    double gamma) {
  if (states.empty()) return {};
  grad::NoGradGuard no_grad;
  constexpr int kA = gridworld::kNumActions;
  // Row k * kA + a evaluates action a from states[k].
  std::vector<std::size_t> repeated;
  std::vector<int> actions;
  for (std::size_t s : states)
    for (int a = 0; a < kA; ++a) {
      repeated.push_back(s);
      actions.push_back(a);
    }
  auto next = target.transition(target.encode(repeated), actions);
  auto r = target.reward(next);
  auto v = target.value(next);
  std::vector<double> y(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    double best = r.data()[k * kA] + gamma * v.data()[k * kA];
    for (int a = 1; a < kA; ++a)
      best = std::max(best, r.data()[k * kA + a] + gamma * v.data()[k * kA + a]);
    y[k] = best;
  }
  return y;
}

double compute_target(const ModelParams& target, std::size_t state,
                      double gamma) {
  const std::size_t s[] = {state};
  return compute_targets(target, s, gamma)[0];
}

Loss batch_loss(std::span<const Window> windows, const ModelParams& online,
                const ModelParams& target, double gamma) {
  if (windows.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const std::size_t batch = windows.size();
  std::size_t longest = 0;
  for (const auto& w : windows) {
    if (w.length() == 0) throw std::invalid_argument("batch_loss: empty window");
    longest = std::max(longest, w.length());
  }

  // Bootstrap targets, once per distinct non-terminal successor state.
  std::vector<std::size_t> distinct;
  for (const auto& w : windows)
    for (std::size_t n = 0; n < w.length(); ++n)
      if (!w.terminal[n]) distinct.push_back(w.next_states[n]);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const auto y_values = compute_targets(target, distinct, gamma);
  auto target_of = [&](std::size_t state) {
    auto it = std::lower_bound(distinct.begin(), distinct.end(), state);
    return y_values[static_cast<std::size_t>(it - distinct.begin())];
  };

  std::vector<std::size_t> starts;
  for (const auto& w : windows) starts.push_back(w.start_state);
  nets::HiddenState h = online.encode(starts);

  Tensor value_sum, reward_sum;
  std::vector<int> actions(batch);
  for (std::size_t n = 0; n < longest; ++n) {
    std::vector<double> y(batch, 0.0), rew(batch, 0.0), mask(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const Window& w = windows[b];
      if (n < w.length()) {
        actions[b] = w.actions[n];
        y[b] = w.terminal[n] ? 0.0 : target_of(w.next_states[n]);
        rew[b] = w.rewards[n];
        mask[b] = 1.0;
      } else {
        actions[b] = 0;  // padding, masked out below
      }
    }
    h = online.transition(h, actions);
    Tensor m = column(std::move(mask));
    Tensor v_term = grad::sum(grad::mul(
        grad::square(grad::sub(online.value(h), column(std::move(y)))), m));
    Tensor r_term = grad::sum(grad::mul(
        grad::square(grad::sub(online.reward(h), column(std::move(rew)))), m));
    value_sum = n == 0 ? v_term : grad::add(value_sum, v_term);
    reward_sum = n == 0 ? r_term : grad::add(reward_sum, r_term);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  Loss loss;
  loss.value = grad::scale(value_sum, inv);
  loss.reward = grad::scale(reward_sum, inv);
  loss.total = grad::add(loss.value, loss.reward);
  return loss;
}

Tensor loss_value(const Window& window, const ModelParams& online,
                  const ModelParams& target, double gamma) {
  return batch_loss(std::span(&window, 1), online, target, gamma).value;
}

Tensor loss_reward(const Window& window, const ModelParams& online) {
  return batch_loss(std::span(&window, 1), online, online, 0.0).reward;
}

Tensor total_loss(std::span<const Window> windows, const ModelParams& online,
                  const ModelParams& target, double gamma) {
  return batch_loss(windows, online, target, gamma).total;
}

TrainResult train(const TrainConfig& config, const gridworld::MazeSpec& maze,
                  const MetricsCallback& on_episode) {
  config.validate();
  Rng master(config.seed);
  Rng init_rng = master.fork();
  Rng act_rng = master.fork();
  Rng blind_rng = master.fork();
  Rng sample_rng = master.fork();

  nets::NetConfig net{maze.cell_count(), gridworld::kNumActions,
                      config.hidden_dim, config.encoder_hidden_dim};
  TrainResult result{ModelParams::xavier(net, init_rng), {}, {},
                     replay::ReplayBuffer(config.buffer_capacity)};
  result.target = result.online.clone(false);
  grad::Adam optimizer(result.online.parameters(),
                       {.learning_rate = config.learning_rate});

  gridworld::Environment env(maze);
  replay::BlindnessSchedule blindness(config.p, config.horizon);
  agent::ControllerState controller;
  replay::Trajectory episode{0, config.seed, {}};
  EpisodeMetrics current;
  double value_acc = 0.0, reward_acc = 0.0;
  int updates = 0;

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const double epsilon = config.epsilon_at(step);
    const gridworld::Cell cell = env.cell();
    const bool blind = blindness.next_is_blind();
    const auto obs = blind ? gridworld::Observation::blinded()
                           : gridworld::Observation::visible(maze.index(cell));
    auto decision = agent::select_action(controller, obs, result.online,
                                         config.gamma, epsilon, act_rng);
    controller = std::move(decision.next);
    const auto outcome = env.step(decision.action);
    blindness.advance(blind_rng);

    episode.steps.push_back({maze.index(cell), blind, decision.action,
                             outcome.reward, maze.index(outcome.cell),
                             outcome.reached_goal, outcome.truncated});
    current.episode_return += outcome.reward;
    current.blind_steps += blind ? 1 : 0;

    if (step >= config.warmup_steps && step % config.train_every == 0) {
      if (auto windows = result.buffer.sample(
              config.batch_size, static_cast<std::size_t>(config.horizon),
              sample_rng)) {
        Loss loss = batch_loss(*windows, result.online, result.target,
                               config.gamma);
        const double lv = loss.value.item(), lr = loss.reward.item();
        if (!std::isfinite(lv) || !std::isfinite(lr))
          throw TrainingDiverged("non-finite loss at global step " +
                                 std::to_string(step) + " (value " +
                                 std::to_string(lv) + ", reward " +
                                 std::to_string(lr) + ")");
        optimizer.zero_grad();
        grad::backward(loss.total);
        optimizer.step();
        nets::soft_update(result.target, result.online, config.tau);
        value_acc += lv;
        reward_acc += lr;
        ++updates;
      }
    }

    if (outcome.done()) {
      current.global_step = step + 1;
      current.episode_length = env.steps();
      current.epsilon = epsilon;
      current.reached_goal = outcome.reached_goal;
      current.loss_value = updates ? value_acc / updates : 0.0;
      current.loss_reward = updates ? reward_acc / updates : 0.0;
      if (on_episode) on_episode(current);
      result.metrics.push_back(current);
      result.buffer.add(std::move(episode));
      episode = replay::Trajectory{static_cast<std::uint64_t>(current.episode + 1),
                                   config.seed, {}};
      current = EpisodeMetrics{};
      current.episode = static_cast<std::int64_t>(result.metrics.size());
      value_acc = reward_acc = 0.0;
      updates = 0;
      env.reset();
      blindness.reset();
      controller = agent::ControllerState{};
    }
  }
  return result;
}

void write_metrics_header(std::ostream& out) {
  out << "global_step,episode,episode_length,return,epsilon,loss_value,"
         "loss_reward\n";
}

void write_metrics_row(std::ostream& out, const EpisodeMetrics& m) {
  std::ostringstream row;
  row << std::setprecision(10) << m.global_step << ',' << m.episode << ','
      << m.episode_length << ',' << m.episode_return << ',' << m.epsilon << ','
      << m.loss_value << ',' << m.loss_reward << '\n';
  out << row.str();
}

}  // namespace blindnav::training
