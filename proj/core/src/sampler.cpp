#include "pointvid/sampler.hpp"

#include <cmath>

#include "pointvid/error.hpp"

namespace pointvid {

std::vector<float> sample_z0(const EpsPredictor& predictor, std::span<const float> z_t, int t, int n_steps,
                             const NoiseSchedule& sched) {
  const auto ts = ddim_timesteps(t, n_steps);
  std::vector<float> z(z_t.begin(), z_t.end());
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const auto eps = predictor(z, ts[k]);
    if (eps.size() != z.size()) throw ShapeError("predictor output does not match z_t");
    z = ddim_step(z, eps, ts[k], ts[k + 1], sched);
  }
  return z;
}

SampleResult sample_z0(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
                       std::span<const float> cond, std::span<const float> z_t, int t, int n_steps,
                       const NoiseSchedule& sched, GradMode mode) {
  const auto ts = ddim_timesteps(t, n_steps);
  SampleResult result;
  std::vector<float> z(z_t.begin(), z_t.end());
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const bool last = k + 2 == ts.size();
    const bool keep = last && mode == GradMode::kFinalStepOnly;
    DenoiserPass<float> pass(cfg, params, dims, z, cond, ts[k], keep);
    z = ddim_step(z, pass.output(), ts[k], ts[k + 1], sched);
    if (keep) {
      const double ab = sched.alpha_bar[static_cast<std::size_t>(ts[k])];
      const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(ts[k + 1])];
      result.eps_to_z0_ = -std::sqrt(ab_prev) * std::sqrt(1.0 - ab) / std::sqrt(ab) + std::sqrt(1.0 - ab_prev);
      result.final_t_ = ts[k];
      result.final_pass_.emplace(std::move(pass));
    }
  }
  result.z0 = std::move(z);
  return result;
}

std::vector<float> SampleResult::backward(std::span<const float> d_z0) const {
  if (!final_pass_) throw Error("sample was drawn without a gradient tape");
  if (d_z0.size() != z0.size()) throw ShapeError("gradient does not match the sample");
  std::vector<float> d_eps(d_z0.size());
  for (std::size_t i = 0; i < d_eps.size(); ++i) d_eps[i] = static_cast<float>(eps_to_z0_ * d_z0[i]);
  return final_pass_->backward(d_eps);
}

}  // namespace pointvid
