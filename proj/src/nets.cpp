#include "blindnav/nets.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace blindnav::nets {

using grad::Shape;
using grad::ShapeError;

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& x : w) x = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Tensor bias(std::size_t n) { return Tensor::zeros({n}, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return grad::add(grad::matmul(x, w), b);
}

const char* kGateNames[4] = {"input", "forget", "cell", "output"};

}  // namespace

bool HiddenState::finite() const {
  for (const Tensor* t : {&h, &c})
    for (double v : t->data())
      if (!std::isfinite(v)) return false;
  return true;
}

ModelParams ModelParams::xavier(const NetConfig& config, Rng& rng) {
  if (config.observation_dim == 0 || config.num_actions == 0 ||
      config.hidden_dim == 0 || config.encoder_hidden_dim == 0)
    throw std::invalid_argument("network dimensions must be positive");
  ModelParams p;
  p.config_ = config;
  const auto hid = config.hidden_dim, enc = config.encoder_hidden_dim;
  p.enc_w1_ = glorot(config.observation_dim, enc, rng);
  p.enc_b1_ = bias(enc);
  p.enc_w2_ = glorot(enc, hid, rng);
  p.enc_b2_ = bias(hid);
  for (std::size_t g = 0; g < 4; ++g) {
    p.gate_w_[g] = glorot(config.num_actions + hid, hid, rng);
    p.gate_b_[g] = bias(hid);
  }
  p.reward_w_ = glorot(hid, 1, rng);
  p.reward_b_ = bias(1);
  p.value_w_ = glorot(hid, 1, rng);
  p.value_b_ = bias(1);
  return p;
}

ModelParams ModelParams::zeros(const NetConfig& config) {
  Rng rng(0);
  ModelParams p = xavier(config, rng);
  for (auto& [name, t] : p.named())
    for (double& v : t.data()) v = 0.0;
  return p;
}

Tensor one_hot_rows(std::span<const std::size_t> indices, std::size_t width) {
  std::vector<double> data(indices.size() * width, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= width)
      throw std::out_of_range("one-hot index " + std::to_string(indices[r]) +
                              " outside width " + std::to_string(width));
    data[r * width + indices[r]] = 1.0;
  }
  return Tensor::from({indices.size(), width}, std::move(data));
}

Tensor one_hot_actions(std::span<const int> actions, std::size_t num_actions) {
  std::vector<std::size_t> idx;
  idx.reserve(actions.size());
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= num_actions)
      throw std::out_of_range("invalid action id " + std::to_string(a));
    idx.push_back(static_cast<std::size_t>(a));
  }
  return one_hot_rows(idx, num_actions);
}

HiddenState ModelParams::encode(const Tensor& observations) const {
  if (observations.rank() != 2 || observations.cols() != config_.observation_dim)
    throw ShapeError("encode: expected batch x " +
                     std::to_string(config_.observation_dim) +
                     " observations, got " +
                     grad::shape_string(observations.shape()));
  Tensor hidden = grad::tanh(linear(observations, enc_w1_, enc_b1_));
  Tensor h = grad::tanh(linear(hidden, enc_w2_, enc_b2_));
  Tensor c = Tensor::zeros({observations.rows(), config_.hidden_dim});
  return {std::move(h), std::move(c)};
}

HiddenState ModelParams::encode(std::span<const std::size_t> cells) const {
  return encode(one_hot_rows(cells, config_.observation_dim));
}

HiddenState ModelParams::transition(const HiddenState& state,
                                    std::span<const int> actions) const {
  if (actions.size() != state.batch())
    throw ShapeError("transition: " + std::to_string(actions.size()) +
                     " actions for batch of " + std::to_string(state.batch()));
  Tensor x = grad::concat(one_hot_actions(actions, config_.num_actions),
                          state.h);
  Tensor in = grad::sigmoid(linear(x, gate_w_[kInputGate], gate_b_[kInputGate]));
  Tensor forget =
      grad::sigmoid(linear(x, gate_w_[kForgetGate], gate_b_[kForgetGate]));
  Tensor cand = grad::tanh(linear(x, gate_w_[kCellGate], gate_b_[kCellGate]));
  Tensor out =
      grad::sigmoid(linear(x, gate_w_[kOutputGate], gate_b_[kOutputGate]));
  Tensor c = grad::add(grad::mul(forget, state.c), grad::mul(in, cand));
  Tensor h = grad::mul(out, grad::tanh(c));
  return {std::move(h), std::move(c)};
}

Tensor ModelParams::reward(const HiddenState& state) const {
  return linear(state.h, reward_w_, reward_b_);
}

Tensor ModelParams::value(const HiddenState& state) const {
  return linear(state.h, value_w_, value_b_);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"encoder.w1", enc_w1_},
      {"encoder.b1", enc_b1_},
      {"encoder.w2", enc_w2_},
      {"encoder.b2", enc_b2_},
  };
  for (std::size_t g = 0; g < 4; ++g) {
    out.emplace_back(std::string("lstm.") + kGateNames[g] + ".w", gate_w_[g]);
    out.emplace_back(std::string("lstm.") + kGateNames[g] + ".b", gate_b_[g]);
  }
  out.emplace_back("reward.w", reward_w_);
  out.emplace_back("reward.b", reward_b_);
  out.emplace_back("value.w", value_w_);
  out.emplace_back("value.b", value_b_);
  return out;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named()) n += t.size();
  return n;
}

Tensor& ModelParams::get(const std::string& name) {
  if (name == "encoder.w1") return enc_w1_;
  if (name == "encoder.b1") return enc_b1_;
  if (name == "encoder.w2") return enc_w2_;
  if (name == "encoder.b2") return enc_b2_;
  if (name == "reward.w") return reward_w_;
  if (name == "reward.b") return reward_b_;
  if (name == "value.w") return value_w_;
  if (name == "value.b") return value_b_;
  for (std::size_t g = 0; g < 4; ++g) {
    const std::string prefix = std::string("lstm.") + kGateNames[g];
    if (name == prefix + ".w") return gate_w_[g];
    if (name == prefix + ".b") return gate_b_[g];
  }
  throw std::out_of_range("unknown parameter '" + name + "'");
}

ModelParams ModelParams::clone(bool requires_grad) const {
  ModelParams copy = *this;
  for (auto& [name, t] : named()) copy.get(name) = t.detach(requires_grad);
  return copy;
}

void soft_update(ModelParams& target, const ModelParams& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  auto dst = target.named();
  auto src = online.named();
  if (dst.size() != src.size())
    throw ShapeError("soft_update: parameter sets differ");
  for (std::size_t k = 0; k < dst.size(); ++k) {
    Tensor& t = dst[k].second;
    const Tensor& o = src[k].second;
    if (t.shape() != o.shape())
      throw ShapeError("soft_update: " + dst[k].first + " shape " +
                       grad::shape_string(t.shape()) + " vs " +
                       grad::shape_string(o.shape()));
    auto td = t.data();
    auto od = o.data();
    for (std::size_t i = 0; i < td.size(); ++i)
      td[i] = (1.0 - tau) * td[i] + tau * od[i];
  }
}

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["magic"] = kCheckpointMagic;
  const auto& c = params.config();
  doc["config"] = {{"observation_dim", c.observation_dim},
                   {"num_actions", c.num_actions},
                   {"hidden_dim", c.hidden_dim},
                   {"encoder_hidden_dim", c.encoder_hidden_dim}};
  auto& tensors = doc["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params.named()) {
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"data", std::vector<double>(t.data().begin(),
                                                    t.data().end())}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " +
                             e.what());
  }
  if (doc.value("magic", "") != kCheckpointMagic)
    throw std::runtime_error(path.string() + " is not a " + kCheckpointMagic +
                             " file");
  NetConfig config;
  const auto& jc = doc.at("config");
  config.observation_dim = jc.at("observation_dim").get<std::size_t>();
  config.num_actions = jc.at("num_actions").get<std::size_t>();
  config.hidden_dim = jc.at("hidden_dim").get<std::size_t>();
  config.encoder_hidden_dim = jc.at("encoder_hidden_dim").get<std::size_t>();
  ModelParams params = ModelParams::zeros(config);
  std::size_t loaded = 0;
  for (const auto& jt : doc.at("tensors")) {
    Tensor& t = params.get(jt.at("name").get<std::string>());
    auto shape = jt.at("shape").get<Shape>();
    auto data = jt.at("data").get<std::vector<double>>();
    if (shape != t.shape())
      throw std::runtime_error("checkpoint tensor " +
                               jt.at("name").get<std::string>() + " has shape " +
                               grad::shape_string(shape) + ", expected " +
                               grad::shape_string(t.shape()));
    t = Tensor::from(std::move(shape), std::move(data), true);
    ++loaded;
  }
  if (loaded != params.named().size())
    throw std::runtime_error("checkpoint " + path.string() +
                             " is missing parameters");
  return params;
}

}  // namespace blindnav::nets
