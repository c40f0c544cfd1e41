#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace pointvid {

/// Static pinhole camera at the world origin looking down +z, with +y up.
///
/// Pixel centers sit at integer coordinates: column c has u = c, row r has v = r.
/// u = cx + fx * x / z, v = cy - fy * y / z, depth d = z.
struct CameraIntrinsics {
  double fx = 32.0;
  double fy = 32.0;
  double cx = 15.5;
  double cy = 15.5;
  std::size_t width = 32;
  std::size_t height = 32;
  double near = 0.1;
  double far = 10.0;

  /// Throws ValidationError unless fx, fy > 0 and 0 < near < far.
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Default camera used by the dataset generator for an H x W image.
CameraIntrinsics default_camera(std::size_t height, std::size_t width);

/// Pixel coordinates plus depth.
struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
};

/// Throws ProjectionError when the depth is not inside (near, far).
PixelDepth project(const Eigen::Vector3d& world, const CameraIntrinsics& cam);
Eigen::Vector3d unproject(const PixelDepth& pixel, const CameraIntrinsics& cam);

/// Normalized point channels: u / width, v / height, d / far.
Eigen::Vector3d normalize_pixel(const PixelDepth& pixel, const CameraIntrinsics& cam);
PixelDepth denormalize_pixel(const Eigen::Vector3d& normalized, const CameraIntrinsics& cam);

/// Projection followed by normalization, without the depth-range check.
/// Used wherever world trajectories are written into point grids.
Eigen::Vector3d project_normalized(const Eigen::Vector3d& world, const CameraIntrinsics& cam);

/// Normalized (u, v, d) straight to world coordinates.
Eigen::Vector3d unproject_normalized(const Eigen::Vector3d& uvd, const CameraIntrinsics& cam);

/// d(world) / d(normalized uvd), a 3x3 Jacobian at the given normalized point.
Eigen::Matrix3d unproject_normalized_jacobian(const Eigen::Vector3d& uvd, const CameraIntrinsics& cam);

/// Ray direction through pixel (u, v), scaled so its z component is 1.
Eigen::Vector3d pixel_ray(double u, double v, const CameraIntrinsics& cam);

}  // namespace pointvid
