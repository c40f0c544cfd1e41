#include "pointvid/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pointvid/error.hpp"

namespace pointvid {

void NoiseSchedule::validate() const {
  if (steps < 1 || alpha_bar.size() != static_cast<std::size_t>(steps) + 1) {
    throw ParameterError("noise schedule needs S >= 1 and S + 1 levels");
  }
  if (alpha_bar[0] != 1.0) throw ParameterError("alpha_bar[0] must be exactly 1");
  for (int t = 1; t <= steps; ++t) {
    if (!(alpha_bar[static_cast<std::size_t>(t)] < alpha_bar[static_cast<std::size_t>(t) - 1])) {
      throw ParameterError("alpha_bar must be strictly decreasing (step " + std::to_string(t) + ")");
    }
  }
  if (!(alpha_bar.back() > 0.0)) throw ParameterError("alpha_bar[S] must be positive");
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ParameterError("schedule needs at least one step");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ParameterError("need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
  }
  s.validate();
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& s) {
  if (t < 0 || t > s.steps) {
    throw ParameterError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(s.steps) + "]");
  }
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("tensor sizes differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

std::vector<float> add_noise(std::span<const float> z0, std::span<const float> eps, int t, const NoiseSchedule& s) {
  check_t(t, s);
  check_sizes(z0.size(), eps.size());
  std::vector<float> out(z0.begin(), z0.end());
  if (t == 0) return out;
  const double a = std::sqrt(s.alpha_bar[static_cast<std::size_t>(t)]);
  const double b = std::sqrt(1.0 - s.alpha_bar[static_cast<std::size_t>(t)]);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(a * z0[i] + b * eps[i]);
  return out;
}

std::vector<float> predict_z0(std::span<const float> z_t, std::span<const float> eps_hat, int t,
                              const NoiseSchedule& s) {
  check_t(t, s);
  check_sizes(z_t.size(), eps_hat.size());
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  const double inv_a = 1.0 / std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  std::vector<float> out(z_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>((z_t[i] - b * eps_hat[i]) * inv_a);
  return out;
}

std::vector<float> ddim_step(std::span<const float> z_t, std::span<const float> eps_hat, int t, int t_prev,
                             const NoiseSchedule& s) {
  check_t(t, s);
  check_t(t_prev, s);
  if (t_prev >= t) {
    throw ParameterError("DDIM step needs t_prev < t, got " + std::to_string(t_prev) + " >= " + std::to_string(t));
  }
  check_sizes(z_t.size(), eps_hat.size());
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  const double ab_prev = s.alpha_bar[static_cast<std::size_t>(t_prev)];
  const double inv_a = 1.0 / std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  const double a_prev = std::sqrt(ab_prev);
  const double b_prev = std::sqrt(1.0 - ab_prev);
  std::vector<float> out(z_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z0 = (z_t[i] - b * eps_hat[i]) * inv_a;
    out[i] = static_cast<float>(a_prev * z0 + b_prev * eps_hat[i]);
  }
  return out;
}

std::vector<int> ddim_timesteps(int t, int n_steps) {
  if (n_steps < 1) throw ParameterError("DDIM sampling needs at least one step");
  if (t < 1) throw ParameterError("DDIM sampling needs a start timestep >= 1");
  const int n = std::min(n_steps, t);
  std::vector<int> ts(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    ts[static_cast<std::size_t>(k)] = static_cast<int>((static_cast<long long>(t) * (n - k)) / n);
  }
  return ts;
}

double diff_loss(std::span<const float> eps_hat, std::span<const float> eps) {
  check_sizes(eps_hat.size(), eps.size());
  if (eps.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = static_cast<double>(eps_hat[i]) - static_cast<double>(eps[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(eps.size());
}

}  // namespace pointvid
