#include "pointvid/camera.hpp"

#include <string>

#include "pointvid/error.hpp"

namespace pointvid {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  if (!(near > 0.0 && near < far)) throw ValidationError("camera clip planes must satisfy 0 < near < far");
  if (width == 0 || height == 0) throw ValidationError("camera image extents must be positive");
}

CameraIntrinsics default_camera(std::size_t height, std::size_t width) {
  CameraIntrinsics cam;
  cam.width = width;
  cam.height = height;
  cam.fx = static_cast<double>(width);
  cam.fy = static_cast<double>(width);
  cam.cx = 0.5 * static_cast<double>(width - 1);
  cam.cy = 0.5 * static_cast<double>(height - 1);
  cam.near = 0.1;
  cam.far = 10.0;
  return cam;
}

PixelDepth project(const Eigen::Vector3d& world, const CameraIntrinsics& cam) {
  const double z = world.z();
  if (!(z > cam.near && z < cam.far)) {
    throw ProjectionError("depth " + std::to_string(z) + " outside (" + std::to_string(cam.near) + ", " +
                          std::to_string(cam.far) + ")");
  }
  return {cam.cx + cam.fx * world.x() / z, cam.cy - cam.fy * world.y() / z, z};
}

Eigen::Vector3d unproject(const PixelDepth& pixel, const CameraIntrinsics& cam) {
  return {(pixel.u - cam.cx) * pixel.d / cam.fx, -(pixel.v - cam.cy) * pixel.d / cam.fy, pixel.d};
}

Eigen::Vector3d normalize_pixel(const PixelDepth& pixel, const CameraIntrinsics& cam) {
  return {pixel.u / static_cast<double>(cam.width), pixel.v / static_cast<double>(cam.height), pixel.d / cam.far};
}

PixelDepth denormalize_pixel(const Eigen::Vector3d& n, const CameraIntrinsics& cam) {
  return {n.x() * static_cast<double>(cam.width), n.y() * static_cast<double>(cam.height), n.z() * cam.far};
}

Eigen::Vector3d project_normalized(const Eigen::Vector3d& world, const CameraIntrinsics& cam) {
  const double z = world.z();
  const PixelDepth px{cam.cx + cam.fx * world.x() / z, cam.cy - cam.fy * world.y() / z, z};
  return normalize_pixel(px, cam);
}

Eigen::Vector3d unproject_normalized(const Eigen::Vector3d& uvd, const CameraIntrinsics& cam) {
  return unproject(denormalize_pixel(uvd, cam), cam);
}

Eigen::Matrix3d unproject_normalized_jacobian(const Eigen::Vector3d& uvd, const CameraIntrinsics& cam) {
  const double w = static_cast<double>(cam.width);
  const double h = static_cast<double>(cam.height);
  const double u = uvd.x() * w;
  const double v = uvd.y() * h;
  const double d = uvd.z() * cam.far;
  Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
  // x = (u - cx) d / fx, y = -(v - cy) d / fy, z = d
  j(0, 0) = w * d / cam.fx;
  j(0, 2) = (u - cam.cx) * cam.far / cam.fx;
  j(1, 1) = -h * d / cam.fy;
  j(1, 2) = -(v - cam.cy) * cam.far / cam.fy;
  j(2, 2) = cam.far;
  return j;
}

Eigen::Vector3d pixel_ray(double u, double v, const CameraIntrinsics& cam) {
  return {(u - cam.cx) / cam.fx, -(v - cam.cy) / cam.fy, 1.0};
}

}  // namespace pointvid
