#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "pointvid/evaluate.hpp"
#include "pointvid/train.hpp"
#include "pointvid/trackprep.hpp"

namespace pointvid {

namespace fs = std::filesystem;

/// Value of POINTVID_SEED, if set. Throws ParameterError when it is not an unsigned integer.
std::optional<std::uint64_t> env_seed();

struct RunManifest {
  std::string command;
  nlohmann::json config;  // fully resolved
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string version;
  std::string started;  // ISO 8601 UTC
  std::string finished;
};

std::string utc_timestamp();
nlohmann::json manifest_to_json(const RunManifest& m);
/// Stamps `finished` and writes the manifest atomically to `file`.
void write_manifest(RunManifest m, const fs::path& file);

// --- dataset generation ---------------------------------------------------------------------

struct GenDataOptions {
  std::size_t scenes = 64;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t stride = 4;
  fs::path out;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const GenDataOptions& o);

/// Writes out/scene_NNNN/{video.vpt, tracks.vpt, mask.vpt, scene.json}.
void gen_dataset(const GenDataOptions& opts);

/// One synthetic scene directory.
void gen_scene(std::uint64_t seed, const GenDataOptions& opts, const fs::path& dir);

// --- track preparation ----------------------------------------------------------------------

enum class SmoothingMode { kAuto, kOn, kOff };  // auto: on whenever noise is injected

struct PrepOptions {
  fs::path in;
  fs::path out;  // may equal `in`
  NoiseSpec noise;
  SmoothingMode smoothing = SmoothingMode::kAuto;
  KalmanSpec kalman;
  std::size_t knn = kDefaultInterpNeighbors;
  std::size_t stride = 1;  // keep every stride-th track
  int jobs = 1;

  void validate() const;
  bool smoothing_enabled() const;
};

nlohmann::json to_json(const PrepOptions& o);

struct PrepStats {
  std::size_t scenes = 0;
  std::size_t tracked_pixels = 0;
  std::size_t interpolated_pixels = 0;
};

/// Per scene: pointgrid.vpt and joint.vpt, plus mask.vpt and scene.json when out != in.
/// Throws PipelineError if a non-empty mask has no usable track.
PrepStats prep_dataset(const PrepOptions& opts);

/// Scene directories (those containing `marker`) under `dir`, sorted. Throws InputError if none.
std::vector<fs::path> scene_dirs(const fs::path& dir, const std::string& marker);

// --- training, evaluation, sampling, rendering ------------------------------------------------

struct TrainRunOptions {
  TrainConfig config;
  fs::path out;
  std::optional<fs::path> resume;
  std::ostream* log = nullptr;
};

struct TrainRunResult {
  TrainConfig config;  // resolved, including the model actually trained
  std::int64_t iterations = 0;
  fs::path checkpoint;
  std::optional<fs::path> init_checkpoint;  // written when an RGB model was augmented
};

/// out/{checkpoint/, metrics.jsonl, timing.jsonl, config.json}; joint stages need `resume`.
TrainRunResult run_training(const TrainRunOptions& opts);

EvalReport eval_checkpoint(const fs::path& ckpt, const fs::path& data, const EvalConfig& config);

struct SampleOptions {
  fs::path ckpt;
  fs::path cond;  // P6 frame
  fs::path out;
  int steps = 20;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const SampleOptions& o);

/// Draws pure noise at t = S and runs DDIM. Writes out/joint.vpt (video.vpt for an RGB model),
/// storage range, clamped to [0, 1]. Returns the written path.
fs::path sample_video(const SampleOptions& opts);

struct RenderOptions {
  fs::path in;                    // joint.vpt, storage range
  fs::path out;
  std::optional<fs::path> scene;  // scene.json supplying the camera
};

struct RenderStats {
  std::size_t frames = 0;
  std::size_t points_per_frame_max = 0;
};

/// out/frame_NNN.ppm from the RGB channels and out/points_NNN.ply with the unprojected points of
/// every pixel whose normalized depth exceeds near / far, colored by depth.
RenderStats render_joint(const RenderOptions& opts);

}  // namespace pointvid
