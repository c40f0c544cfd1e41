#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <vector>

namespace pointvid {

enum class OptimizerKind { kAdam, kSgdMomentum };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;    // Adam
  double beta2 = 0.999;  // Adam
  double eps = 1e-8;     // Adam
  double momentum = 0.9; // SGD
  double clip_norm = 0.0;  // global gradient-norm clip, 0 disables

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

nlohmann::json optimizer_to_json(const OptimizerConfig& cfg);
OptimizerConfig optimizer_from_json(const nlohmann::json& j);

/// First-order optimizer over a flat float parameter vector. Updates are evaluated per
/// element in double; the moment buffers are stored as float so a saved state resumes exactly.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, std::size_t size);

  /// Returns the gradient norm before clipping.
  double step(std::span<float> params, std::span<const float> grad);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<float>& first_moment() const { return m_; }
  const std::vector<float>& second_moment() const { return v_; }
  void restore(std::uint64_t steps, std::vector<float> m, std::vector<float> v);

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<float> m_;  // Adam first moment, or SGD velocity
  std::vector<float> v_;  // Adam second moment, empty for SGD
};

}  // namespace pointvid
