#include "pointvid/optimizer.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "pointvid/error.hpp"

namespace pointvid {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ParameterError("unknown optimizer '" + name + "' (expected adam or sgd_momentum)");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("Adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("Adam eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ParameterError("clip_norm must be non-negative");
}

nlohmann::json optimizer_to_json(const OptimizerConfig& c) {
  return {{"kind", to_string(c.kind)}, {"lr", c.lr},           {"beta1", c.beta1},        {"beta2", c.beta2},
          {"eps", c.eps},              {"momentum", c.momentum}, {"clip_norm", c.clip_norm}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  if (j.contains("kind")) c.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.momentum = j.value("momentum", c.momentum);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t size) : cfg_(cfg), m_(size, 0.0f) {
  cfg_.validate();
  if (cfg_.kind == OptimizerKind::kAdam) v_.assign(size, 0.0f);
}

void Optimizer::restore(std::uint64_t steps, std::vector<float> m, std::vector<float> v) {
  const std::size_t want_v = cfg_.kind == OptimizerKind::kAdam ? m_.size() : 0;
  if (m.size() != m_.size() || v.size() != want_v) throw LayoutError("optimizer state does not match the model size");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double Optimizer::step(std::span<float> params, std::span<const float> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("optimizer size mismatch");
  double norm2 = 0.0;
  for (float g : grad) norm2 += static_cast<double>(g) * g;
  const double norm = std::sqrt(norm2);
  const double scale = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  ++steps_;
  if (cfg_.kind == OptimizerKind::kSgdMomentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double vel = cfg_.momentum * m_[i] + scale * grad[i];
      m_[i] = static_cast<float>(vel);
      params[i] = static_cast<float>(params[i] - cfg_.lr * vel);
    }
    return norm;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = scale * grad[i];
    const double m = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    const double v = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    m_[i] = static_cast<float>(m);
    v_[i] = static_cast<float>(v);
    params[i] = static_cast<float>(params[i] - cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps));
  }
  return norm;
}

}  // namespace pointvid
