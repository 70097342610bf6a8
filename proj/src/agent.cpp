#include "blindnav/agent.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace blindnav::agent {

namespace {

HiddenState row(const HiddenState& batch, std::size_t r) {
  const std::size_t width = batch.h.cols();
  auto slice = [&](const grad::Tensor& t) {
    auto d = t.data();
    return grad::Tensor::from(
        {1, width}, std::vector<double>(d.begin() + r * width,
                                        d.begin() + (r + 1) * width));
  };
  return {slice(batch.h), slice(batch.c)};
}

HiddenState repeat(const HiddenState& state, std::size_t times) {
  const std::size_t width = state.h.cols();
  auto tile = [&](const grad::Tensor& t) {
    std::vector<double> out;
    out.reserve(times * width);
    for (std::size_t i = 0; i < times; ++i)
      out.insert(out.end(), t.data().begin(), t.data().end());
    return grad::Tensor::from({times, width}, std::move(out));
  };
  return {tile(state.h), tile(state.c)};
}

}  // namespace

double q_rollout(const ModelParams& params, std::size_t observation_index,
                 std::span<const int> actions, double gamma) {
  if (actions.empty())
    throw std::invalid_argument("q_rollout needs at least one action");
  grad::NoGradGuard no_grad;
  const std::size_t obs[] = {observation_index};
  HiddenState h = params.encode(obs);
  double q = 0.0;
  double discount = 1.0;
  for (int a : actions) {
    h = params.transition(h, std::span<const int>(&a, 1));
    q += discount * params.reward(h).item();
    discount *= gamma;
  }
  return q + discount * params.value(h).item();
}

QValues one_step_q(const ModelParams& params, const HiddenState& latent,
                   double gamma, std::vector<HiddenState>* successors) {
  grad::NoGradGuard no_grad;
  static constexpr int kAll[kNumActions] = {0, 1, 2, 3};
  HiddenState next = params.transition(repeat(latent, kNumActions), kAll);
  auto r = params.reward(next);
  auto v = params.value(next);
  QValues q{};
  for (int a = 0; a < kNumActions; ++a)
    q[a] = r.data()[a] + gamma * v.data()[a];
  if (successors) {
    successors->clear();
    for (int a = 0; a < kNumActions; ++a) successors->push_back(row(next, a));
  }
  return q;
}

int greedy_action(const QValues& q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

Decision select_action(const ControllerState& state,
                       const gridworld::Observation& obs,
                       const ModelParams& params, double gamma, double epsilon,
                       Rng& rng) {
  Decision d;
  d.next = state;
  if (!obs.blind) {
    grad::NoGradGuard no_grad;
    const std::size_t idx[] = {obs.index};
    d.next.latent = params.encode(idx);
    d.next.mode = Mode::kClosed;
    d.next.steps_blind = 0;
  } else {
    if (!state.has_latent())
      throw std::logic_error("blind observation before any visible one");
    d.next.mode = Mode::kOpen;
    d.next.steps_blind = state.steps_blind + 1;
  }
  std::vector<HiddenState> successors;
  d.q = one_step_q(params, d.next.latent, gamma, &successors);
  d.action = greedy_action(d.q);
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
    d.action = static_cast<int>(rng.index(kNumActions));
    d.explored = true;
  }
  d.next.latent = std::move(successors[d.action]);
  return d;
}

EpisodeResult run_episode(const gridworld::MazeSpec& maze,
                          const ModelParams& params,
                          std::span<const gridworld::Mask> masks, double gamma,
                          double epsilon, Rng& rng, bool record) {
  gridworld::Environment env(maze);
  ControllerState state;
  EpisodeResult result;
  while (!env.done()) {
    const gridworld::Cell from = env.cell();
    const auto obs = gridworld::observe(maze, from, masks);
    Decision d = select_action(state, obs, params, gamma, epsilon, rng);
    auto step = env.step(d.action);
    result.total_reward += step.reward;
    result.reached_goal = step.reached_goal;
    if (record)
      result.steps.push_back({env.steps() - 1, from, obs.blind, d.action,
                              step.reward});
    state = std::move(d.next);
  }
  result.length = env.steps();
  return result;
}

void write_recording(std::ostream& out, const EpisodeResult& episode) {
  for (const auto& s : episode.steps) {
    nlohmann::json line = {{"t", s.t},
                           {"cell", {s.cell.row, s.cell.col}},
                           {"blind", s.blind},
                           {"action", gridworld::action_name(s.action)},
                           {"reward", s.reward}};
    out << line.dump() << '\n';
  }
}

}  // namespace blindnav::agent
