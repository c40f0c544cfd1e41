#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pointvid {

/// Cumulative signal levels alpha_bar[0..S] of a DDPM/DDIM noise schedule.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha_bar;  // alpha_bar[0] == 1, strictly decreasing, alpha_bar[S] > 0

  void validate() const;
};

/// Linear beta schedule: beta_s for s = 1..S evenly spaced in [beta_min, beta_max].
NoiseSchedule make_schedule(int steps, double beta_min = 1e-4, double beta_max = 2e-2);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
std::vector<float> add_noise(std::span<const float> z0, std::span<const float> eps, int t, const NoiseSchedule& s);

/// Deterministic (eta = 0) DDIM update from t to t_prev < t.
std::vector<float> ddim_step(std::span<const float> z_t, std::span<const float> eps_hat, int t, int t_prev,
                             const NoiseSchedule& s);

/// Clean-sample estimate (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
std::vector<float> predict_z0(std::span<const float> z_t, std::span<const float> eps_hat, int t,
                              const NoiseSchedule& s);

/// Uniformly spaced descending timesteps t = t_0 > t_1 > ... > t_n = 0.
/// n is clamped to t so that every step moves by at least one.
std::vector<int> ddim_timesteps(int t, int n_steps);

/// Mean squared error, accumulated in double.
double diff_loss(std::span<const float> eps_hat, std::span<const float> eps);

}  // namespace pointvid
