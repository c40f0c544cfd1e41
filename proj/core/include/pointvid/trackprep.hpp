#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pointvid/camera.hpp"
#include "pointvid/scene.hpp"
#include "pointvid/tensor.hpp"

namespace pointvid {

/// Simulated tracker imprecision, in scene units.
struct NoiseSpec {
  double sigma = 0.0;
  double outlier_prob = 0.0;
  double outlier_scale = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adds i.i.d. Gaussian noise to every sample of frames >= 1. Frame 0 stays exact.
TrackSet inject_noise(const TrackSet& tracks, const NoiseSpec& noise);

struct KalmanSpec {
  double process_var = 1e-4;  // q, white-acceleration intensity per frame
  double measure_var = 1e-2;  // r

  void validate() const;
};

struct SmoothResult {
  TrackSet tracks;
  bool skipped = false;  // set when T < 2 and the input was returned unchanged
};

/// Per point and per axis: constant-velocity Kalman filter followed by a Rauch-Tung-Striebel
/// backward pass. Frame 0 is treated as a noise-free observation (it is the track anchor),
/// so the smoothed frame 0 equals the input frame 0.
SmoothResult kalman_smooth(const TrackSet& tracks, const KalmanSpec& spec);

/// One scalar series through the same smoother; exposed for tests.
std::vector<double> kalman_smooth_series(const std::vector<double>& series, const KalmanSpec& spec);

inline constexpr std::size_t kDefaultInterpNeighbors = 3;

/// How each foreground pixel of the grid obtains its trajectory.
struct PixelSource {
  std::size_t row = 0;
  std::size_t col = 0;
  bool tracked = false;                 // copied from a single track
  std::vector<std::size_t> tracks;      // contributing track indices
  std::vector<double> weights;          // same length as tracks, non-negative, sum 1
};

struct InterpolationPlan {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PixelSource> pixels;  // foreground pixels in row-major order
};

/// Inverse-distance weights (power 2) for the given squared distances; an exact hit takes
/// all the weight (the lowest index among exact hits when there are several).
std::vector<double> idw_weights(const std::vector<double>& dist2);

/// Intersects anchors with the mask, then assigns each untracked foreground pixel its k nearest
/// tracked anchors in frame-0 (u, v) with inverse-distance weights.
/// Throws PipelineError if the mask is non-empty but no anchor falls inside it.
InterpolationPlan plan_interpolation(const TrackSet& tracks, const ForegroundMask& mask,
                                     std::size_t k = kDefaultInterpNeighbors);

/// Builds the pixel-aligned [T, H, W, 3] grid of normalized (u, v, d) trajectories.
/// The tracks are used as given (smooth them beforehand if desired).
PointGrid build_point_grid(const TrackSet& tracks, const ForegroundMask& mask, const CameraIntrinsics& cam,
                           std::size_t height, std::size_t width, std::size_t k = kDefaultInterpNeighbors);

struct GridPoints {
  std::size_t frames = 0;
  std::size_t count = 0;
  std::vector<double> values;  // [T, N, 3]
  std::vector<std::array<std::size_t, 2>> pixels;  // (row, col), row-major order
};

GridPoints grid_to_points(const PointGrid& grid, const ForegroundMask& mask);

/// Inverse of grid_to_points: foreground pixels receive the points, all others zero.
PointGrid scatter_points(const GridPoints& points, std::size_t height, std::size_t width);

}  // namespace pointvid
