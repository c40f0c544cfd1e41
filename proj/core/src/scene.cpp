#include "pointvid/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>

#include "pointvid/error.hpp"

namespace pointvid {

using Eigen::Quaterniond;
using Eigen::Vector3d;

void SceneSpec::validate() const {
  if (frames < 2) throw ValidationError("scene needs at least 2 frames");
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(restitution >= 0.0 && restitution <= 1.0)) throw ValidationError("restitution must lie in [0,1]");
  camera.validate();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const auto& b = bodies[i];
    if (std::abs(b.orientation.norm() - 1.0) > 1e-6) {
      throw ValidationError("body " + std::to_string(i) + " orientation is not a unit quaternion");
    }
    if (b.shape == ShapeKind::kSphere && !(b.radius > 0.0)) {
      throw ValidationError("body " + std::to_string(i) + " sphere radius must be positive");
    }
    if (b.shape == ShapeKind::kBox && !(b.extents.minCoeff() > 0.0)) {
      throw ValidationError("body " + std::to_string(i) + " box extents must be positive");
    }
  }
}

double lowest_point(const RigidBody& body, const Vector3d& position, const Quaterniond& orientation) {
  if (body.shape == ShapeKind::kSphere) return position.y() - body.radius;
  const Eigen::Matrix3d r = orientation.toRotationMatrix();
  const Vector3d half = 0.5 * body.extents;
  return position.y() - (r.row(1).cwiseAbs().transpose().cwiseProduct(half)).sum();
}

namespace {

Quaterniond rotation_increment(const Vector3d& omega, double dt) {
  const double angle = omega.norm() * dt;
  if (angle == 0.0) return Quaterniond::Identity();
  return Quaterniond(Eigen::AngleAxisd(angle, omega.normalized()));
}

}  // namespace

SceneStates simulate(const SceneSpec& spec) {
  spec.validate();
  SceneStates states(spec.frames);
  states[0].reserve(spec.bodies.size());
  for (const auto& b : spec.bodies) {
    states[0].push_back({b.position, b.orientation, b.linear_velocity, b.angular_velocity});
  }
  for (std::size_t t = 1; t < spec.frames; ++t) {
    states[t] = states[t - 1];
    for (std::size_t i = 0; i < spec.bodies.size(); ++i) {
      auto& s = states[t][i];
      s.linear_velocity += spec.gravity * spec.dt;
      s.position += s.linear_velocity * spec.dt;
      s.orientation = (rotation_increment(s.angular_velocity, spec.dt) * s.orientation).normalized();
      const double low = lowest_point(spec.bodies[i], s.position, s.orientation);
      if (low < spec.ground_height) {
        s.position.y() += spec.ground_height - low;
        if (s.linear_velocity.y() < 0.0) s.linear_velocity.y() = -spec.restitution * s.linear_velocity.y();
      }
    }
  }
  return states;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smallest ray parameter with depth in (near, far); the ray direction has z == 1 so t is depth.
double pick_hit(double t0, double t1, const CameraIntrinsics& cam) {
  if (t0 > cam.near && t0 < cam.far) return t0;
  if (t1 > cam.near && t1 < cam.far) return t1;
  return kInf;
}

double intersect_sphere(const Vector3d& dir, const Vector3d& center, double radius, const CameraIntrinsics& cam) {
  const double a = dir.squaredNorm();
  const double b = -2.0 * dir.dot(center);
  const double c = center.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  return pick_hit((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a), cam);
}

double intersect_box(const Vector3d& dir, const Vector3d& center, const Quaterniond& q, const Vector3d& extents,
                     const CameraIntrinsics& cam) {
  const Eigen::Matrix3d rt = q.toRotationMatrix().transpose();
  const Vector3d o = -(rt * center);
  const Vector3d d = rt * dir;
  const Vector3d half = 0.5 * extents;
  double tmin = -kInf;
  double tmax = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return kInf;
      continue;
    }
    double t0 = (-half[a] - o[a]) / d[a];
    double t1 = (half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax) return kInf;
  return pick_hit(tmin, tmax, cam);
}

}  // namespace

FrameBuffers rasterize(const SceneSpec& spec, const std::vector<BodyState>& state) {
  const auto& cam = spec.camera;
  const std::size_t h = cam.height;
  const std::size_t w = cam.width;
  FrameBuffers fb;
  fb.color.assign(h * w * 3, kBackgroundGray);
  fb.depth.assign(h * w, kInf);
  fb.body.assign(h * w, -1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const Vector3d dir = pixel_ray(static_cast<double>(c), static_cast<double>(r), cam);
      const std::size_t px = r * w + c;
      for (std::size_t b = 0; b < spec.bodies.size(); ++b) {
        const auto& body = spec.bodies[b];
        const auto& s = state[b];
        const double t = body.shape == ShapeKind::kSphere
                             ? intersect_sphere(dir, s.position, body.radius, cam)
                             : intersect_box(dir, s.position, s.orientation, body.extents, cam);
        if (t < fb.depth[px]) {
          fb.depth[px] = t;
          fb.body[px] = static_cast<int>(b);
          for (int k = 0; k < 3; ++k) fb.color[px * 3 + k] = static_cast<float>(body.albedo[k]);
        }
      }
    }
  }
  return fb;
}

RenderResult render(const SceneSpec& spec, const SceneStates& states) {
  const auto& cam = spec.camera;
  const std::size_t frame_size = cam.height * cam.width * 3;
  std::vector<float> video(states.size() * frame_size);
  RenderResult out;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const FrameBuffers fb = rasterize(spec, states[t]);
    std::copy(fb.color.begin(), fb.color.end(), video.begin() + static_cast<std::ptrdiff_t>(t * frame_size));
    ForegroundMask mask(cam.height, cam.width);
    for (std::size_t px = 0; px < fb.body.size(); ++px) {
      if (fb.body[px] >= 0) mask.set(px / cam.width, px % cam.width, true);
    }
    out.masks.push_back(std::move(mask));
  }
  out.video = RgbVideo(TensorF({states.size(), cam.height, cam.width, 3}, std::move(video)));
  return out;
}

TrackSet extract_tracks(const SceneSpec& spec, const SceneStates& states, std::size_t stride) {
  if (stride == 0) throw ParameterError("track stride must be positive");
  const auto& cam = spec.camera;
  const FrameBuffers fb = rasterize(spec, states.at(0));

  struct Sample {
    std::size_t row, col;
  };
  std::vector<Sample> samples;
  std::vector<bool> body_sampled(spec.bodies.size(), false);
  for (std::size_t r = stride / 2; r < cam.height; r += stride) {
    for (std::size_t c = stride / 2; c < cam.width; c += stride) {
      const int b = fb.body[r * cam.width + c];
      if (b < 0) continue;
      samples.push_back({r, c});
      body_sampled[static_cast<std::size_t>(b)] = true;
    }
  }
  for (std::size_t b = 0; b < spec.bodies.size(); ++b) {
    if (body_sampled[b]) continue;
    double sr = 0.0, sc = 0.0;
    std::size_t n = 0;
    for (std::size_t px = 0; px < fb.body.size(); ++px) {
      if (fb.body[px] != static_cast<int>(b)) continue;
      sr += static_cast<double>(px / cam.width);
      sc += static_cast<double>(px % cam.width);
      ++n;
    }
    if (n == 0) continue;
    sr /= static_cast<double>(n);
    sc /= static_cast<double>(n);
    std::size_t best = 0;
    double best_d = kInf;
    for (std::size_t px = 0; px < fb.body.size(); ++px) {
      if (fb.body[px] != static_cast<int>(b)) continue;
      const double dr = static_cast<double>(px / cam.width) - sr;
      const double dc = static_cast<double>(px % cam.width) - sc;
      const double d = dr * dr + dc * dc;
      if (d < best_d) {
        best_d = d;
        best = px;
      }
    }
    samples.push_back({best / cam.width, best % cam.width});
  }

  TrackSet tracks;
  tracks.frames = states.size();
  tracks.count = samples.size();
  tracks.world.resize(tracks.frames * tracks.count);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto [r, c] = samples[i];
    const std::size_t px = r * cam.width + c;
    const auto b = static_cast<std::size_t>(fb.body[px]);
    const double depth = fb.depth[px];
    const Vector3d p0 = unproject({static_cast<double>(c), static_cast<double>(r), depth}, cam);
    const auto& s0 = states[0][b];
    const Vector3d local = s0.orientation.conjugate() * (p0 - s0.position);
    tracks.anchor_u.push_back(static_cast<int>(c));
    tracks.anchor_v.push_back(static_cast<int>(r));
    tracks.object_id.push_back(static_cast<int>(b));
    tracks.at(0, i) = p0;
    for (std::size_t t = 1; t < states.size(); ++t) {
      const auto& s = states[t][b];
      tracks.at(t, i) = s.orientation * local + s.position;
    }
  }
  return tracks;
}

TensorF tracks_to_tensor(const TrackSet& tracks) {
  if (tracks.count == 0) {
    // A [1, 3 + 3T] row of -1 marks the empty set (extents must be positive).
    return TensorF({1, 3 + 3 * tracks.frames}, std::vector<float>(3 + 3 * tracks.frames, -1.0f));
  }
  const std::size_t cols = 3 + 3 * tracks.frames;
  std::vector<float> data(tracks.count * cols);
  for (std::size_t i = 0; i < tracks.count; ++i) {
    float* row = data.data() + i * cols;
    row[0] = static_cast<float>(tracks.anchor_u[i]);
    row[1] = static_cast<float>(tracks.anchor_v[i]);
    row[2] = static_cast<float>(tracks.object_id[i]);
    for (std::size_t t = 0; t < tracks.frames; ++t) {
      for (int k = 0; k < 3; ++k) row[3 + 3 * t + static_cast<std::size_t>(k)] = static_cast<float>(tracks.at(t, i)[k]);
    }
  }
  return TensorF({tracks.count, cols}, std::move(data));
}

TrackSet tracks_from_tensor(const TensorF& t) {
  if (t.rank() != 2 || t.dim(1) < 6 || (t.dim(1) - 3) % 3 != 0) {
    throw ShapeError("tracks tensor must be [N, 3 + 3T], got " + shape_string(t.dims()));
  }
  TrackSet tracks;
  tracks.frames = (t.dim(1) - 3) / 3;
  const std::size_t cols = t.dim(1);
  if (t.dim(0) == 1 && t[0] < 0.0f) return tracks;  // empty marker
  tracks.count = t.dim(0);
  tracks.world.resize(tracks.frames * tracks.count);
  for (std::size_t i = 0; i < tracks.count; ++i) {
    const float* row = t.data().data() + i * cols;
    tracks.anchor_u.push_back(static_cast<int>(row[0]));
    tracks.anchor_v.push_back(static_cast<int>(row[1]));
    tracks.object_id.push_back(static_cast<int>(row[2]));
    for (std::size_t f = 0; f < tracks.frames; ++f) {
      tracks.at(f, i) = Vector3d(row[3 + 3 * f], row[4 + 3 * f], row[5 + 3 * f]);
    }
  }
  return tracks;
}

SceneSpec random_scene(std::uint64_t seed, std::size_t frames, std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  SceneSpec spec;
  spec.seed = seed;
  spec.frames = frames;
  spec.camera = default_camera(height, width);
  const int n_bodies = 1 + static_cast<int>(rng() % 2);
  for (int i = 0; i < n_bodies; ++i) {
    RigidBody b;
    b.shape = (rng() % 2 == 0) ? ShapeKind::kBox : ShapeKind::kSphere;
    b.radius = uniform(0.4, 0.65);
    b.extents = Vector3d(uniform(0.6, 1.2), uniform(0.6, 1.2), uniform(0.6, 1.2));
    // Saturated colors stay far from the background gray.
    const double hue = uniform(0.0, 6.0);
    const double sat = uniform(0.65, 1.0);
    const double val = uniform(0.7, 1.0);
    const double chroma = val * sat;
    const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    Vector3d rgb;
    switch (static_cast<int>(hue)) {
      case 0: rgb = {chroma, x, 0}; break;
      case 1: rgb = {x, chroma, 0}; break;
      case 2: rgb = {0, chroma, x}; break;
      case 3: rgb = {0, x, chroma}; break;
      case 4: rgb = {x, 0, chroma}; break;
      default: rgb = {chroma, 0, x}; break;
    }
    b.albedo = rgb + Vector3d::Constant(val - chroma);
    b.position = Vector3d(uniform(-0.9, 0.9), uniform(-0.3, 0.8), uniform(3.0, 4.5));
    const Vector3d axis = Vector3d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();
    b.orientation = Quaterniond(Eigen::AngleAxisd(uniform(0.0, 3.14159), axis)).normalized();
    b.linear_velocity = Vector3d(uniform(-0.8, 0.8), uniform(-0.5, 1.0), uniform(-0.4, 0.4));
    b.angular_velocity = Vector3d(uniform(-2.0, 2.0), uniform(-2.0, 2.0), uniform(-2.0, 2.0));
    spec.bodies.push_back(b);
  }
  return spec;
}

namespace {

nlohmann::json vec_json(const Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Vector3d vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

nlohmann::json scene_to_json(const SceneSpec& spec) {
  nlohmann::json bodies = nlohmann::json::array();
  for (const auto& b : spec.bodies) {
    nlohmann::json jb;
    jb["shape"] = b.shape == ShapeKind::kBox ? "box" : "sphere";
    if (b.shape == ShapeKind::kBox) {
      jb["extents"] = vec_json(b.extents);
    } else {
      jb["radius"] = b.radius;
    }
    jb["albedo"] = vec_json(b.albedo);
    jb["position"] = vec_json(b.position);
    jb["orientation"] = {b.orientation.w(), b.orientation.x(), b.orientation.y(), b.orientation.z()};
    jb["linear_velocity"] = vec_json(b.linear_velocity);
    jb["angular_velocity"] = vec_json(b.angular_velocity);
    bodies.push_back(std::move(jb));
  }
  const auto& c = spec.camera;
  return {
      {"frames", spec.frames},
      {"dt", spec.dt},
      {"gravity", vec_json(spec.gravity)},
      {"ground_height", spec.ground_height},
      {"restitution", spec.restitution},
      {"seed", spec.seed},
      {"camera",
       {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
        {"near", c.near}, {"far", c.far}}},
      {"bodies", std::move(bodies)},
  };
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  try {
    spec.frames = j.at("frames").get<std::size_t>();
    spec.dt = j.at("dt").get<double>();
    spec.gravity = vec_from(j.at("gravity"));
    spec.ground_height = j.at("ground_height").get<double>();
    spec.restitution = j.at("restitution").get<double>();
    spec.seed = j.value("seed", std::uint64_t{0});
    const auto& jc = j.at("camera");
    auto& c = spec.camera;
    c.fx = jc.at("fx").get<double>();
    c.fy = jc.at("fy").get<double>();
    c.cx = jc.at("cx").get<double>();
    c.cy = jc.at("cy").get<double>();
    c.width = jc.at("width").get<std::size_t>();
    c.height = jc.at("height").get<std::size_t>();
    c.near = jc.at("near").get<double>();
    c.far = jc.at("far").get<double>();
    for (const auto& jb : j.at("bodies")) {
      RigidBody b;
      const auto shape = jb.at("shape").get<std::string>();
      if (shape == "box") {
        b.shape = ShapeKind::kBox;
        b.extents = vec_from(jb.at("extents"));
      } else if (shape == "sphere") {
        b.shape = ShapeKind::kSphere;
        b.radius = jb.at("radius").get<double>();
      } else {
        throw ValidationError("unknown body shape '" + shape + "'");
      }
      b.albedo = vec_from(jb.at("albedo"));
      b.position = vec_from(jb.at("position"));
      const auto& q = jb.at("orientation");
      if (!q.is_array() || q.size() != 4) throw ValidationError("orientation must be [w,x,y,z]");
      b.orientation = Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      b.linear_velocity = vec_from(jb.value("linear_velocity", nlohmann::json::array({0, 0, 0})));
      b.angular_velocity = vec_from(jb.value("angular_velocity", nlohmann::json::array({0, 0, 0})));
      spec.bodies.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed scene JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace pointvid
