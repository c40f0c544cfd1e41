#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "pointvid/dataset.hpp"
#include "pointvid/denoiser.hpp"
#include "pointvid/geomreg.hpp"
#include "pointvid/sampler.hpp"
#include "pointvid/schedule.hpp"

namespace pointvid {

/// Mean over frames >= 1 and graph pairs of |dist - rest|. 0 for an empty graph or T < 2.
double eval_rigidity(const PointBatch& pred, const NeighborGraph& graph);

/// Mean over frames >= 2 and points of the second-difference norm. 0 for T < 3.
double eval_smoothness(const PointBatch& pred);

struct EvalConfig {
  int t = 500;  // noise level the ground truth is pushed to before recovery
  int steps = 20;
  int n_samples = 1;  // noise draws per scene
  std::uint64_t seed = 0;
  int graph_k = static_cast<int>(kDefaultGraphNeighbors);

  void validate() const;
};

struct SceneEval {
  std::string name;
  double point_mse = 0.0;
  double rigidity = 0.0;
  double smoothness = 0.0;
  std::size_t points = 0;
};

struct EvalReport {
  double point_mse = 0.0;  // mean of the per-scene values
  double rigidity = 0.0;
  double smoothness = 0.0;
  std::vector<SceneEval> scenes;
  EvalConfig config;
};

nlohmann::json report_to_json(const EvalReport& report);

/// Builds the predictor used for one scene.
using PredictorFactory = std::function<EpsPredictor(const SceneSample&)>;

/// Noises each scene's ground truth to config.t, recovers z0 with DDIM and scores the point channels
/// on foreground pixels (storage units). Throws ParameterError on an empty set.
EvalReport evaluate(const PredictorFactory& factory, const std::vector<SceneSample>& scenes, const EvalConfig& config,
                    const NoiseSchedule& sched);

EvalReport evaluate_model(const DenoiserModel& model, const std::vector<SceneSample>& scenes,
                          const EvalConfig& config, const NoiseSchedule& sched);

/// Predictor that returns the exact noise relating z_t to the scene's clean z0.
PredictorFactory oracle_predictor(const NoiseSchedule& sched);

}  // namespace pointvid
