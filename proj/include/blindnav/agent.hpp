#pragma once

// Closed/open-loop controller over one latent model. A visible observation
// re-encodes the latent (closed loop); a blind one keeps rolling the latent
// forward with the transition function (open loop).

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "blindnav/gridworld.hpp"
#include "blindnav/nets.hpp"
#include "blindnav/random.hpp"

namespace blindnav::agent {

using gridworld::kNumActions;
using nets::HiddenState;
using nets::ModelParams;

enum class Mode { kClosed, kOpen };

struct ControllerState {
  Mode mode = Mode::kClosed;
  HiddenState latent;  // 1 x hidden_dim; undefined before the first observation
  int steps_blind = 0;

  bool has_latent() const { return latent.h.defined(); }
};

using QValues = std::array<double, kNumActions>;

/// sum_{k<n} gamma^k r(h_{k+1}) + gamma^n v(h_n), h_0 = g(s), h_{k+1} = f(h_k, a_k).
double q_rollout(const ModelParams& params, std::size_t observation_index,
                 std::span<const int> actions, double gamma);

/// r(f(h, a)) + gamma * v(f(h, a)) for every action, evaluated as one batch.
/// `successors`, when given, receives f(h, a) for each action a.
QValues one_step_q(const ModelParams& params, const HiddenState& latent,
                   double gamma, std::vector<HiddenState>* successors = nullptr);

int greedy_action(const QValues& q);  // lowest id wins ties

struct Decision {
  int action = 0;
  bool explored = false;  // action drawn uniformly rather than greedily
  QValues q{};
  ControllerState next;
};

Decision select_action(const ControllerState& state,
                       const gridworld::Observation& obs,
                       const ModelParams& params, double gamma, double epsilon,
                       Rng& rng);

struct EpisodeStep {
  int t = 0;
  gridworld::Cell cell;  // cell the action was taken from
  bool blind = false;
  int action = 0;
  double reward = 0.0;
};

struct EpisodeResult {
  int length = 0;
  double total_reward = 0.0;
  bool reached_goal = false;
  std::vector<EpisodeStep> steps;  // filled only when recording
};

/// Runs one evaluation episode with the given masks active.
EpisodeResult run_episode(const gridworld::MazeSpec& maze,
                          const ModelParams& params,
                          std::span<const gridworld::Mask> masks, double gamma,
                          double epsilon, Rng& rng, bool record = false);

/// One JSON object per line: {"t","cell":[row,col],"blind","action","reward"}.
void write_recording(std::ostream& out, const EpisodeResult& episode);

}  // namespace blindnav::agent
