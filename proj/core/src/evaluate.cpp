#include "pointvid/evaluate.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "pointvid/error.hpp"
#include "pointvid/random.hpp"
#include "pointvid/train.hpp"

namespace pointvid {

double eval_rigidity(const PointBatch& pred, const NeighborGraph& graph) {
  if (pred.frames < 2 || graph.pairs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 1; t < pred.frames; ++t) {
    for (std::size_t p = 0; p < graph.pairs.size(); ++p) {
      const auto [i, j] = graph.pairs[p];
      const double dx = pred.at(t, i, 0) - pred.at(t, j, 0);
      const double dy = pred.at(t, i, 1) - pred.at(t, j, 1);
      const double dz = pred.at(t, i, 2) - pred.at(t, j, 2);
      sum += std::abs(std::sqrt(dx * dx + dy * dy + dz * dz) - graph.rest_dist[p]);
    }
  }
  return sum / static_cast<double>((pred.frames - 1) * graph.pairs.size());
}

double eval_smoothness(const PointBatch& pred) {
  if (pred.frames < 3 || pred.count == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 2; t < pred.frames; ++t) {
    for (std::size_t i = 0; i < pred.count; ++i) {
      double n2 = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = pred.at(t, i, a) - 2.0 * pred.at(t - 1, i, a) + pred.at(t - 2, i, a);
        n2 += d * d;
      }
      sum += std::sqrt(n2);
    }
  }
  return sum / static_cast<double>((pred.frames - 2) * pred.count);
}

void EvalConfig::validate() const {
  if (t < 1) throw ParameterError("evaluation timestep must be >= 1");
  if (steps < 1) throw ParameterError("evaluation needs at least one DDIM step");
  if (n_samples < 1) throw ParameterError("evaluation needs at least one sample per scene");
  if (graph_k < 1) throw ParameterError("graph_k must be >= 1");
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& s : r.scenes) {
    scenes.push_back({{"name", s.name},
                      {"point_mse", s.point_mse},
                      {"rigidity", s.rigidity},
                      {"smoothness", s.smoothness},
                      {"points", s.points}});
  }
  return {{"point_mse", r.point_mse},
          {"rigidity", r.rigidity},
          {"smoothness", r.smoothness},
          {"t", r.config.t},
          {"steps", r.config.steps},
          {"n_samples", r.config.n_samples},
          {"seed", r.config.seed},
          {"scenes", std::move(scenes)}};
}

EvalReport evaluate(const PredictorFactory& factory, const std::vector<SceneSample>& scenes, const EvalConfig& config,
                    const NoiseSchedule& sched) {
  config.validate();
  if (scenes.empty()) throw ParameterError("evaluation set is empty");
  if (config.t > sched.steps) throw ParameterError("evaluation timestep exceeds the schedule");
  EvalReport report;
  report.config = config;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const SceneSample& s = scenes[k];
    const EpsPredictor predictor = factory(s);
    SceneEval se;
    se.name = s.name;
    se.points = s.fg.size();
    const std::size_t hw = s.dims.height * s.dims.width;
    const std::size_t n = s.fg.size();
    for (int rep = 0; rep < config.n_samples; ++rep) {
      std::mt19937_64 rng(mix_seed(config.seed, k * 1000003ULL + static_cast<std::uint64_t>(rep)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<float> eps(s.z0.size());
      for (auto& e : eps) e = static_cast<float>(gauss(rng));
      const auto z_t = add_noise(s.z0, eps, config.t, sched);
      const auto z0 = sample_z0(predictor, z_t, config.t, config.steps, sched);
      if (n == 0) continue;
      double sq = 0.0;
      for (std::size_t t = 0; t < s.dims.frames; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t a = 0; a < 3; ++a) {
            const double pred = (static_cast<double>(z0[(t * hw + s.fg[i]) * 6 + 3 + a]) + 1.0) * 0.5;
            const double d = pred - s.truth_storage[(t * n + i) * 3 + a];
            sq += d * d;
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(config.n_samples);
      se.point_mse += sq / static_cast<double>(s.dims.frames * n * 3) * inv;
      const PointBatch pred = decode_world_points(z0, s);
      se.rigidity += eval_rigidity(pred, graph_for(pred.frame(0), static_cast<std::size_t>(config.graph_k))) * inv;
      se.smoothness += eval_smoothness(pred) * inv;
    }
    report.scenes.push_back(se);
  }
  const double inv = 1.0 / static_cast<double>(report.scenes.size());
  for (const auto& s : report.scenes) {
    report.point_mse += s.point_mse * inv;
    report.rigidity += s.rigidity * inv;
    report.smoothness += s.smoothness * inv;
  }
  return report;
}

EvalReport evaluate_model(const DenoiserModel& model, const std::vector<SceneSample>& scenes,
                          const EvalConfig& config, const NoiseSchedule& sched) {
  if (model.cfg.in_channels != 6) throw ParameterError("point evaluation needs the 6-channel joint model");
  const PredictorFactory factory = [&model](const SceneSample& s) -> EpsPredictor {
    return [&model, &s](std::span<const float> z, int t) {
      return denoise_forward(model.cfg, model.params, s.dims, z, s.cond, t);
    };
  };
  return evaluate(factory, scenes, config, sched);
}

PredictorFactory oracle_predictor(const NoiseSchedule& sched) {
  return [sched](const SceneSample& s) -> EpsPredictor {
    return [sched, &s](std::span<const float> z, int t) {
      const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
      const double a = std::sqrt(ab);
      const double b = std::sqrt(1.0 - ab);
      std::vector<float> eps(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) eps[i] = static_cast<float>((z[i] - a * s.z0[i]) / b);
      return eps;
    };
  };
}

}  // namespace pointvid
