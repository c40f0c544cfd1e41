#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pointvid/denoiser.hpp"
#include "pointvid/schedule.hpp"

namespace pointvid {

/// Any epsilon predictor: (z_t, t) -> eps_hat with the shape of z_t.
using EpsPredictor = std::function<std::vector<float>(std::span<const float> z_t, int t)>;

/// Deterministic DDIM from z_t at step t down to 0 over ddim_timesteps(t, n_steps).
std::vector<float> sample_z0(const EpsPredictor& predictor, std::span<const float> z_t, int t, int n_steps,
                             const NoiseSchedule& sched);

enum class GradMode { kNone, kFinalStepOnly };

/// Model-driven sampling result. Under kFinalStepOnly, every step but the last is a constant
/// for differentiation and the final denoiser pass is kept for `backward`.
class SampleResult {
 public:
  std::vector<float> z0;

  /// Parameter gradient of sum(d_z0 * z0), through the final denoiser pass only.
  std::vector<float> backward(std::span<const float> d_z0) const;
  bool has_tape() const { return final_pass_.has_value(); }
  int final_t() const { return final_t_; }

 private:
  friend SampleResult sample_z0(const DenoiserConfig&, const DenoiserParams&, const VideoDims&,
                                std::span<const float>, std::span<const float>, int, int, const NoiseSchedule&,
                                GradMode);
  std::optional<DenoiserPass<float>> final_pass_;
  int final_t_ = 0;
  double eps_to_z0_ = 0.0;  // d z0 / d eps_hat at the final step
};

SampleResult sample_z0(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
                       std::span<const float> cond, std::span<const float> z_t, int t, int n_steps,
                       const NoiseSchedule& sched, GradMode mode);

}  // namespace pointvid
