#include "blindnav/replay.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace blindnav::replay {

double blindness_trigger_probability(double p, int n) {
  if (n < 1) throw std::invalid_argument("blind stretch length must be >= 1");
  if (p < 0.0) throw std::invalid_argument("p must be non-negative");
  const double q = p / n;
  if (q > 1.0)
    throw std::invalid_argument("p/N = " + std::to_string(q) +
                                " exceeds 1 (p=" + std::to_string(p) +
                                ", N=" + std::to_string(n) + ")");
  return q;
}

bool maybe_start_blindness(double p, int n, Rng& rng) {
  const double q = blindness_trigger_probability(p, n);
  return q > 0.0 && rng.bernoulli(q);
}

BlindnessSchedule::BlindnessSchedule(double p, int n) : p_(p), n_(n) {
  blindness_trigger_probability(p, n);
}

void BlindnessSchedule::advance(Rng& rng) {
  if (remaining_ > 0) {
    --remaining_;
    return;
  }
  if (maybe_start_blindness(p_, n_, rng)) remaining_ = n_;
}

Window make_window(const Trajectory& episode, std::size_t start,
                   std::size_t horizon) {
  if (start >= episode.steps.size())
    throw std::out_of_range("window start past episode end");
  Window w;
  w.start_state = episode.steps[start].state;
  w.start_step = start;
  const std::size_t end = std::min(episode.steps.size(), start + horizon);
  for (std::size_t t = start; t < end; ++t) {
    const Step& s = episode.steps[t];
    w.actions.push_back(s.action);
    w.rewards.push_back(s.reward);
    w.next_states.push_back(s.next_state);
    w.terminal.push_back(s.terminal);
    w.blind.push_back(s.blind);
  }
  return w;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity_steps)
    : capacity_(capacity_steps) {
  if (capacity_ == 0) throw std::invalid_argument("buffer capacity must be > 0");
}

void ReplayBuffer::add(Trajectory episode) {
  const std::size_t n = episode.steps.size();
  if (n == 0) return;
  if (n > capacity_)
    throw std::invalid_argument("episode of " + std::to_string(n) +
                                " steps exceeds buffer capacity");
  while (total_steps_ + n > capacity_) {
    total_steps_ -= episodes_.front().steps.size();
    episodes_.pop_front();
  }
  total_steps_ += n;
  episodes_.push_back(std::move(episode));
  offsets_.clear();
  std::size_t acc = 0;
  for (const auto& e : episodes_) offsets_.push_back(acc += e.steps.size());
}

std::optional<std::vector<Window>> ReplayBuffer::sample(std::size_t batch,
                                                        std::size_t horizon,
                                                        Rng& rng) const {
  if (total_steps_ == 0) return std::nullopt;
  if (horizon == 0) throw std::invalid_argument("window horizon must be >= 1");
  std::vector<Window> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t flat = rng.index(total_steps_);
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
    const std::size_t slot = static_cast<std::size_t>(it - offsets_.begin());
    const std::size_t before = slot == 0 ? 0 : offsets_[slot - 1];
    Window w = make_window(episodes_[slot], flat - before, horizon);
    w.episode_slot = slot;
    out.push_back(std::move(w));
  }
  return out;
}

void ReplayBuffer::dump(std::ostream& out) const {
  for (const auto& e : episodes_) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : e.steps)
      steps.push_back({{"state", s.state},
                       {"blind", s.blind},
                       {"action", s.action},
                       {"reward", s.reward},
                       {"next_state", s.next_state},
                       {"terminal", s.terminal},
                       {"truncated", s.truncated}});
    out << nlohmann::json{{"episode", e.episode_id},
                          {"seed", e.seed},
                          {"steps", std::move(steps)}}
               .dump()
        << '\n';
  }
}

}  // namespace blindnav::replay
