#include "pointvid/dataset.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "pointvid/error.hpp"
#include "pointvid/io.hpp"
#include "pointvid/scene.hpp"

namespace pointvid {

namespace fs = std::filesystem;

std::vector<float> SceneSample::z0_channels(int channels) const {
  if (channels == 6) return z0;
  std::vector<float> out(dims.pixels() * static_cast<std::size_t>(channels));
  for (std::size_t p = 0; p < dims.pixels(); ++p) {
    for (int c = 0; c < channels; ++c) out[p * channels + c] = z0[p * 6 + c];
  }
  return out;
}

namespace {

fs::path require(const fs::path& dir, const char* name) {
  const auto p = dir / name;
  if (!fs::is_regular_file(p)) throw InputError("missing " + p.string());
  return p;
}

}  // namespace

SceneSample load_scene(const fs::path& dir) {
  const TensorF joint = read_tensor(require(dir, "joint.vpt"));
  const TensorF mask_t = read_tensor(require(dir, "mask.vpt"));
  const auto text = read_file(require(dir, "scene.json"));
  const SceneSpec spec =
      scene_from_json(nlohmann::json::parse(reinterpret_cast<const char*>(text.data()),
                                            reinterpret_cast<const char*>(text.data()) + text.size()));
  if (joint.rank() != 4 || joint.dim(3) != 6) {
    throw ShapeError(dir.string() + ": joint.vpt must be [T,H,W,6], got " + shape_string(joint.dims()));
  }
  SceneSample s;
  s.name = dir.filename().string();
  s.dims = {joint.dim(0), joint.dim(1), joint.dim(2)};
  s.camera = spec.camera;
  s.mask = ForegroundMask::from_tensor(mask_t);
  if (s.mask.height() != s.dims.height || s.mask.width() != s.dims.width) {
    throw ShapeError(dir.string() + ": mask does not match the video resolution");
  }
  const TensorF z = to_diffusion_range(joint);
  s.z0 = z.storage();
  const std::size_t hw = s.dims.height * s.dims.width;
  s.cond.resize(hw * 3);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < 3; ++c) s.cond[p * 3 + c] = s.z0[p * 6 + c];
  }
  for (std::size_t r = 0; r < s.dims.height; ++r) {
    for (std::size_t c = 0; c < s.dims.width; ++c) {
      if (s.mask.at(r, c)) s.fg.push_back(r * s.dims.width + c);
    }
  }
  const std::size_t n = s.fg.size();
  s.truth_storage.resize(s.dims.frames * n * 3);
  for (std::size_t t = 0; t < s.dims.frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < 3; ++a) s.truth_storage[(t * n + i) * 3 + a] = joint[(t * hw + s.fg[i]) * 6 + 3 + a];
    }
  }
  s.truth = PointBatch(s.dims.frames, n);
  for (std::size_t k = 0; k < s.dims.frames * n; ++k) {
    const Eigen::Vector3d uvd(s.truth_storage[3 * k], s.truth_storage[3 * k + 1], s.truth_storage[3 * k + 2]);
    const Eigen::Vector3d w = unproject_normalized(uvd, s.camera);
    for (std::size_t a = 0; a < 3; ++a) s.truth.values[3 * k + a] = w[static_cast<Eigen::Index>(a)];
  }
  return s;
}

std::vector<SceneSample> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory " + dir.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "joint.vpt")) dirs.push_back(entry.path());
  }
  if (dirs.empty()) throw InputError("no prepared scenes (joint.vpt) under " + dir.string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<SceneSample> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_scene(d));
  return out;
}

namespace {

Eigen::Vector3d storage_uvd(std::span<const float> z, std::size_t pixel) {
  return {(static_cast<double>(z[pixel * 6 + 3]) + 1.0) * 0.5, (static_cast<double>(z[pixel * 6 + 4]) + 1.0) * 0.5,
          (static_cast<double>(z[pixel * 6 + 5]) + 1.0) * 0.5};
}

void check_joint(std::span<const float> z, const SceneSample& s) {
  if (z.size() != s.dims.pixels() * 6) throw ShapeError("expected a [T,H,W,6] joint tensor");
}

}  // namespace

PointBatch decode_world_points(std::span<const float> z, const SceneSample& s) {
  check_joint(z, s);
  const std::size_t n = s.fg.size();
  const std::size_t hw = s.dims.height * s.dims.width;
  PointBatch out(s.dims.frames, n);
  for (std::size_t t = 0; t < s.dims.frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d w = unproject_normalized(storage_uvd(z, t * hw + s.fg[i]), s.camera);
      for (std::size_t a = 0; a < 3; ++a) out.at(t, i, a) = w[static_cast<Eigen::Index>(a)];
    }
  }
  return out;
}

std::vector<float> world_grad_to_z(std::span<const float> z, std::span<const double> grad, const SceneSample& s) {
  check_joint(z, s);
  const std::size_t n = s.fg.size();
  if (grad.size() != s.dims.frames * n * 3) throw ShapeError("world gradient does not match [T,N,3]");
  const std::size_t hw = s.dims.height * s.dims.width;
  std::vector<float> out(z.size(), 0.0f);
  for (std::size_t t = 0; t < s.dims.frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t px = t * hw + s.fg[i];
      const Eigen::Matrix3d jac = unproject_normalized_jacobian(storage_uvd(z, px), s.camera);
      const Eigen::Vector3d g(grad[(t * n + i) * 3], grad[(t * n + i) * 3 + 1], grad[(t * n + i) * 3 + 2]);
      // storage = (z + 1) / 2
      const Eigen::Vector3d dz = 0.5 * (jac.transpose() * g);
      for (std::size_t a = 0; a < 3; ++a) out[px * 6 + 3 + a] = static_cast<float>(dz[static_cast<Eigen::Index>(a)]);
    }
  }
  return out;
}

}  // namespace pointvid
