#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pointvid/camera.hpp"
#include "pointvid/denoiser.hpp"
#include "pointvid/geomreg.hpp"
#include "pointvid/tensor.hpp"

namespace pointvid {

/// One prepared scene, converted once into the arrays the trainer consumes.
struct SceneSample {
  std::string name;
  VideoDims dims;
  CameraIntrinsics camera;
  ForegroundMask mask;
  std::vector<float> z0;             // [T,H,W,6] joint video in diffusion range
  std::vector<float> cond;           // [H,W,3] first RGB frame in diffusion range
  std::vector<std::size_t> fg;       // foreground pixel indices row * W + col, row-major
  std::vector<float> truth_storage;  // [T,N,3] ground-truth point channels, storage range
  PointBatch truth;                  // the same points unprojected to world space

  /// z0 restricted to the first `channels` channels (3 for the RGB stage).
  std::vector<float> z0_channels(int channels) const;
};

/// Reads joint.vpt, mask.vpt and scene.json from a prepared scene directory.
SceneSample load_scene(const std::filesystem::path& dir);

/// Every subdirectory holding a joint.vpt, sorted by name. Throws InputError when there is none.
std::vector<SceneSample> load_dataset(const std::filesystem::path& dir);

/// World-space [T,N,3] points from the point channels (3..5) of a diffusion-range joint tensor.
PointBatch decode_world_points(std::span<const float> z, const SceneSample& scene);

/// Pulls a world-space gradient on decode_world_points back onto the joint tensor.
std::vector<float> world_grad_to_z(std::span<const float> z, std::span<const double> grad, const SceneSample& scene);

}  // namespace pointvid
