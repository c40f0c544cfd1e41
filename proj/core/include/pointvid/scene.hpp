#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <vector>

#include "pointvid/camera.hpp"
#include "pointvid/tensor.hpp"

namespace pointvid {

enum class ShapeKind { kBox, kSphere };

struct RigidBody {
  ShapeKind shape = ShapeKind::kSphere;
  Eigen::Vector3d extents{1.0, 1.0, 1.0};  // full box side lengths
  double radius = 0.5;                     // sphere only
  Eigen::Vector3d albedo{1.0, 0.0, 0.0};
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d linear_velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();  // world frame, rad/s
};

struct SceneSpec {
  std::vector<RigidBody> bodies;
  Eigen::Vector3d gravity{0.0, -9.81, 0.0};
  double ground_height = -1.0;
  double restitution = 0.5;
  std::size_t frames = 8;
  double dt = 1.0 / 15.0;
  CameraIntrinsics camera;
  std::uint64_t seed = 0;

  /// Throws ValidationError for non-unit quaternions, T < 2, dt <= 0, bad shapes.
  void validate() const;
};

struct BodyState {
  Eigen::Vector3d position;
  Eigen::Quaterniond orientation;
  Eigen::Vector3d linear_velocity;
  Eigen::Vector3d angular_velocity;
};

/// states[frame][body]
using SceneStates = std::vector<std::vector<BodyState>>;

/// Semi-implicit Euler: velocity is updated before position. Rotation uses the exact
/// exponential map of the (constant) angular velocity. Bodies collide only with the ground.
SceneStates simulate(const SceneSpec& spec);

/// Lowest world y of the body at the given pose.
double lowest_point(const RigidBody& body, const Eigen::Vector3d& position, const Eigen::Quaterniond& orientation);

struct FrameBuffers {
  std::vector<float> color;   // H * W * 3
  std::vector<double> depth;  // +inf where empty
  std::vector<int> body;      // -1 where empty
};

inline constexpr float kBackgroundGray = 0.5f;

/// Ray-cast z-buffer for a single frame. Nearest hit wins; exact ties go to the lower body index.
FrameBuffers rasterize(const SceneSpec& spec, const std::vector<BodyState>& state);

struct RenderResult {
  RgbVideo video;
  std::vector<ForegroundMask> masks;  // one per frame; masks[0] is the dataset mask
};

RenderResult render(const SceneSpec& spec, const SceneStates& states);

/// Sparse 3D trajectories anchored at frame-0 pixels.
struct TrackSet {
  std::size_t frames = 0;
  std::size_t count = 0;
  std::vector<Eigen::Vector3d> world;  // frames * count, index [t * count + i]
  std::vector<int> anchor_u;           // column
  std::vector<int> anchor_v;           // row
  std::vector<int> object_id;

  const Eigen::Vector3d& at(std::size_t t, std::size_t i) const { return world[t * count + i]; }
  Eigen::Vector3d& at(std::size_t t, std::size_t i) { return world[t * count + i]; }
};

/// Samples frame-0 foreground pixels on a stride grid (offset stride/2), back-projects each
/// through its body's depth and advects the body-local point rigidly through all frames.
/// A visible body that the grid misses receives one sample at its covered pixel nearest to
/// its pixel centroid, so the set is non-empty whenever the mask is.
TrackSet extract_tracks(const SceneSpec& spec, const SceneStates& states, std::size_t stride);

/// tracks.vpt layout: [N, 3 + 3T], each row (anchor_u, anchor_v, object_id, x0, y0, z0, x1, ...).
TensorF tracks_to_tensor(const TrackSet& tracks);
TrackSet tracks_from_tensor(const TensorF& t);

/// Random falling-bodies scene, fully determined by the seed.
SceneSpec random_scene(std::uint64_t seed, std::size_t frames, std::size_t height, std::size_t width);

nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

}  // namespace pointvid
