#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pointvid/dataset.hpp"
#include "pointvid/denoiser.hpp"
#include "pointvid/geomreg.hpp"
#include "pointvid/optimizer.hpp"
#include "pointvid/schedule.hpp"

namespace pointvid {

enum class Stage { kRgb, kJoint, kJointReg };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainConfig {
  std::string data_dir;
  Stage stage = Stage::kRgb;
  int iterations = 200;  // total; a resumed run continues up to this count
  int batch_size = 1;
  OptimizerConfig optimizer;
  LossWeights weights;  // c0..c2, lambdas and cadence_k
  int z0_steps = 20;
  std::uint64_t seed = 0;
  int schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  DenoiserConfig model;
  bool calibrate = true;  // joint+reg: calibrate c and lambdas before the first step
  int calibration_samples = 8;
  int graph_k = static_cast<int>(kDefaultGraphNeighbors);
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::string dump_dir;      // where a NaN diagnostic goes; empty disables the dump

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);
NoiseSchedule schedule_for(const TrainConfig& cfg);

struct MetricsRecord {
  std::int64_t iteration = 0;
  double l_diff = 0.0;
  std::optional<double> l_recon;
  std::optional<double> l_rigid;
  double total = 0.0;
  std::optional<double> point_mse;  // storage-range MSE of the recovered points, when regularized
  double grad_norm = 0.0;
  double wall_clock_ms = 0.0;
};

/// Deterministic fields only; wall-clock time is written separately.
nlohmann::json metrics_to_json(const MetricsRecord& r);

/// Everything that evolves during training.
struct TrainState {
  DenoiserModel model;
  Optimizer optimizer;
  std::int64_t iteration = 0;
  LossWeights weights;  // resolved (possibly calibrated) weights
};

/// Fresh state for the RGB stage.
TrainState initial_state(const TrainConfig& cfg);

/// One optimization step at state.iteration, which is then incremented.
/// Throws NumericError on a non-finite loss or gradient (after dumping the batch if configured).
MetricsRecord train_step(TrainState& state, const std::vector<SceneSample>& data, const TrainConfig& cfg,
                         const NoiseSchedule& sched);

/// Mean loss magnitudes over a set of sample batches.
struct LossMeans {
  double diff = 0.0;
  double recon = 0.0;
  double rigid = 0.0;
};

/// lambda_diff = 1, lambda_recon = diff / recon, lambda_rigid = diff / rigid (zero means give 0).
LossWeights lambdas_from_means(const LossMeans& means, const LossWeights& base, bool* warned = nullptr);

struct Calibration {
  LossWeights weights;
  LossMeans means;  // measured with the calibrated c
  bool warned = false;
};

/// Calibrates c0..c2 and then the lambdas on the current model. Needs a 6-channel model.
Calibration calibrate_lambdas(const DenoiserModel& model, const std::vector<SceneSample>& data,
                              const TrainConfig& cfg, const NoiseSchedule& sched);

/// Neighbor graph on a frame, shrinking k when the frame has too few points.
/// Returns an empty graph for fewer than two points.
NeighborGraph graph_for(std::span<const double> frame, std::size_t k);

}  // namespace pointvid
