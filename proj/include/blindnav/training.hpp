#pragma once

// N-step open-loop training. For a window (s_t, a_t.., r_t..) of length L:
//   value loss  = sum_{n=1..L} (v(h_n) - y(s_{t+n}))^2
//   reward loss = sum_{n=1..L} (r(h_n) - r_{t+n-1})^2
// with h_0 = g(s_t), h_n = f(h_{n-1}, a_{t+n-1}) under the online weights and
//   y(s) = max_a r'(f'(g'(s), a)) + gamma v'(f'(g'(s), a))
// under the target weights (y = 0 for terminal s). Both losses are averaged
// over the batch and summed.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "blindnav/gridworld.hpp"
#include "blindnav/nets.hpp"
#include "blindnav/replay.hpp"

namespace blindnav::training {

using grad::Tensor;
using nets::ModelParams;
using replay::Window;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  int horizon = 5;  // N: window length and deepest n-step loss term
  double p = 0.5;   // blind-injection level, per-step trigger p / N
  double gamma = 0.99;
  double learning_rate = 1e-3;
  double tau = 0.005;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 100000;
  std::int64_t total_steps = 45000;
  std::int64_t warmup_steps = 1000;
  int train_every = 1;  // environment steps per gradient step
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // of total_steps, linear
  double eval_epsilon = 0.0;
  std::size_t hidden_dim = 64;
  std::size_t encoder_hidden_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError

  double epsilon_at(std::int64_t step) const;

  /// Applies one `key = value` setting; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Flat key-value text: one `key = value` per line, '#' starts a comment.
  static TrainConfig parse(const std::string& text);
  std::string to_text() const;  // every field, stable order
};

double compute_target(const ModelParams& target, std::size_t state,
                      double gamma);

/// compute_target for many states in one batched pass.
std::vector<double> compute_targets(const ModelParams& target,
                                    std::span<const std::size_t> states,
                                    double gamma);

struct Loss {
  Tensor value;   // scalar, batch mean of per-window value losses
  Tensor reward;  // scalar, batch mean of per-window reward losses
  Tensor total;   // value + reward
};

/// Shared rollout for the value and reward losses over a batch of windows.
/// Gradients flow into `online` only.
Loss batch_loss(std::span<const Window> windows, const ModelParams& online,
                const ModelParams& target, double gamma);

Tensor loss_value(const Window& window, const ModelParams& online,
                  const ModelParams& target, double gamma);
Tensor loss_reward(const Window& window, const ModelParams& online);
Tensor total_loss(std::span<const Window> windows, const ModelParams& online,
                  const ModelParams& target, double gamma);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeMetrics {
  std::int64_t global_step = 0;  // steps taken when the episode ended
  std::int64_t episode = 0;
  int episode_length = 0;
  double episode_return = 0.0;
  double epsilon = 0.0;
  double loss_value = 0.0;   // mean over the episode's gradient steps
  double loss_reward = 0.0;
  bool reached_goal = false;
  int blind_steps = 0;
};

struct TrainResult {
  ModelParams online;
  ModelParams target;
  std::vector<EpisodeMetrics> metrics;
  replay::ReplayBuffer buffer;
};

using MetricsCallback = std::function<void(const EpisodeMetrics&)>;

TrainResult train(const TrainConfig& config, const gridworld::MazeSpec& maze,
                  const MetricsCallback& on_episode = {});

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpisodeMetrics& m);

}  // namespace blindnav::training
