#pragma once

// Episode-structured replay buffer with N-step window sampling, plus the
// blind-stretch injector used while collecting experience.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <vector>

#include "blindnav/random.hpp"

namespace blindnav::replay {

struct Step {
  std::size_t state = 0;  // ground-truth cell index, even when blind
  bool blind = false;     // what the agent saw
  int action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool terminal = false;   // reached the goal
  bool truncated = false;  // hit the step cap
};

struct Trajectory {
  std::uint64_t episode_id = 0;
  std::uint64_t seed = 0;
  std::vector<Step> steps;
};

/// Per-step trigger probability p / n; throws std::invalid_argument if > 1.
double blindness_trigger_probability(double p, int n);

/// True with probability p / n: the next n observations are withheld.
bool maybe_start_blindness(double p, int n, Rng& rng);

/// Tracks injected blind stretches. A stretch can only be triggered on a
/// sighted step and covers the following n observations, so consecutive
/// stretches are separated by at least one sighted step. In the long run a
/// fraction p / (1 + p) of observations is blind.
class BlindnessSchedule {
 public:
  BlindnessSchedule(double p, int n);

  /// Whether the observation about to be made is withheld.
  bool next_is_blind() const { return remaining_ > 0; }
  /// Advances one step; `rng` is consulted only on sighted steps.
  void advance(Rng& rng);
  void reset() { remaining_ = 0; }

  static double expected_blind_fraction(double p) { return p / (1.0 + p); }

 private:
  double p_;
  int n_;
  int remaining_ = 0;
};

/// Contiguous slice of one episode. Shorter than the requested horizon only
/// at an episode tail.
struct Window {
  std::size_t start_state = 0;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::size_t> next_states;
  std::vector<bool> terminal;
  std::vector<bool> blind;
  std::size_t episode_slot = 0;
  std::size_t start_step = 0;

  std::size_t length() const { return actions.size(); }
  bool reaches_terminal() const { return !terminal.empty() && terminal.back(); }
};

Window make_window(const Trajectory& episode, std::size_t start,
                   std::size_t horizon);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity_steps = 100000);

  /// Appends a finished episode, evicting whole episodes oldest-first.
  void add(Trajectory episode);

  /// nullopt while the buffer holds no steps ("not ready", retry later).
  std::optional<std::vector<Window>> sample(std::size_t batch,
                                            std::size_t horizon,
                                            Rng& rng) const;

  std::size_t size_steps() const { return total_steps_; }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Trajectory>& episodes() const { return episodes_; }

  /// One JSON object per episode per line.
  void dump(std::ostream& out) const;

 private:
  std::size_t capacity_;
  std::size_t total_steps_ = 0;
  std::deque<Trajectory> episodes_;
  std::vector<std::size_t> offsets_;  // cumulative step counts per episode
};

}  // namespace blindnav::replay
