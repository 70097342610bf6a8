#pragma once

// Latent model shared by the closed- and open-loop controllers:
//   encoder    g: one-hot observation -> h (2-layer tanh MLP), c = 0
//   transition f: (h, c), action one-hot -> (h', c') (LSTM cell)
//   reward     r: h -> scalar (linear)
//   value      v: h -> scalar (linear)
// All functions are batched: row b of every tensor belongs to sample b.

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blindnav/random.hpp"
#include "blindnav/tensor.hpp"

namespace blindnav::nets {

using grad::Tensor;

struct NetConfig {
  std::size_t observation_dim = 0;
  std::size_t num_actions = 4;
  std::size_t hidden_dim = 64;
  std::size_t encoder_hidden_dim = 64;

  bool operator==(const NetConfig&) const = default;
};

struct HiddenState {
  Tensor h;  // batch x hidden_dim
  Tensor c;  // batch x hidden_dim

  std::size_t batch() const { return h.rows(); }
  bool finite() const;
};

class ModelParams {
 public:
  ModelParams() = default;

  /// Glorot-uniform weights and zero biases drawn from `rng`.
  static ModelParams xavier(const NetConfig& config, Rng& rng);
  static ModelParams zeros(const NetConfig& config);

  const NetConfig& config() const { return config_; }

  HiddenState encode(const Tensor& observations) const;
  HiddenState encode(std::span<const std::size_t> cells) const;
  HiddenState transition(const HiddenState& state,
                         std::span<const int> actions) const;
  Tensor reward(const HiddenState& state) const;
  Tensor value(const HiddenState& state) const;

  /// Stable (name, tensor) listing; names key the checkpoint format.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  Tensor& get(const std::string& name);

  /// Deep copy with fresh leaves, e.g. the target network.
  ModelParams clone(bool requires_grad) const;

  static constexpr std::size_t kInputGate = 0;
  static constexpr std::size_t kForgetGate = 1;
  static constexpr std::size_t kCellGate = 2;
  static constexpr std::size_t kOutputGate = 3;

 private:
  NetConfig config_;
  Tensor enc_w1_, enc_b1_, enc_w2_, enc_b2_;
  // Each gate maps concat(action one-hot, h) to hidden_dim.
  std::array<Tensor, 4> gate_w_, gate_b_;
  Tensor reward_w_, reward_b_;
  Tensor value_w_, value_b_;
};

Tensor one_hot_rows(std::span<const std::size_t> indices, std::size_t width);
Tensor one_hot_actions(std::span<const int> actions, std::size_t num_actions);

/// target <- (1 - tau) * target + tau * online, elementwise.
void soft_update(ModelParams& target, const ModelParams& online, double tau);

// Checkpoint: JSON object {"magic": kCheckpointMagic, "config": {...},
// "tensors": [{"name", "shape", "data"}...]}. Doubles round-trip exactly.
inline constexpr const char* kCheckpointMagic = "blindnav-checkpoint-v1";

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace blindnav::nets
