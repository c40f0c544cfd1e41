#include "pointvid/trackprep.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "pointvid/error.hpp"
#include "pointvid/kdtree.hpp"

namespace pointvid {

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  if (!(outlier_prob >= 0.0 && outlier_prob <= 1.0)) throw ValidationError("outlier_prob must lie in [0,1]");
  if (!(outlier_scale >= 0.0)) throw ValidationError("outlier_scale must be non-negative");
}

TrackSet inject_noise(const TrackSet& tracks, const NoiseSpec& noise) {
  noise.validate();
  TrackSet out = tracks;
  if (noise.sigma == 0.0) return out;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t t = 1; t < out.frames; ++t) {
    for (std::size_t i = 0; i < out.count; ++i) {
      Eigen::Vector3d delta(gauss(rng), gauss(rng), gauss(rng));
      delta *= noise.sigma;
      if (noise.outlier_prob > 0.0 && coin(rng) < noise.outlier_prob) {
        delta += noise.outlier_scale * noise.sigma * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      }
      out.at(t, i) += delta;
    }
  }
  return out;
}

void KalmanSpec::validate() const {
  if (!(process_var > 0.0 && measure_var > 0.0)) throw ValidationError("Kalman variances must be positive");
}

std::vector<double> kalman_smooth_series(const std::vector<double>& y, const KalmanSpec& spec) {
  spec.validate();
  const std::size_t n = y.size();
  if (n < 2) return y;
  using Vec2 = Eigen::Vector2d;
  using Mat2 = Eigen::Matrix2d;
  const double q = spec.process_var;
  const double r = spec.measure_var;
  Mat2 f;
  f << 1.0, 1.0, 0.0, 1.0;
  Mat2 qm;
  qm << q / 3.0, q / 2.0, q / 2.0, q;

  std::vector<Vec2> x_pred(n), x_filt(n);
  std::vector<Mat2> p_pred(n), p_filt(n);
  // y[0] is exact and the initial velocity is diffuse; conditioning on y[1] gives the
  // closed-form posterior at frame 1, so the recursion starts there.
  x_filt[1] = Vec2(y[1], y[1] - y[0]);
  p_filt[1] << r, r, r, r + q / 3.0;
  for (std::size_t t = 2; t < n; ++t) {
    x_pred[t] = f * x_filt[t - 1];
    p_pred[t] = f * p_filt[t - 1] * f.transpose() + qm;
    const double s = p_pred[t](0, 0) + r;
    const Vec2 gain = p_pred[t].col(0) / s;
    x_filt[t] = x_pred[t] + gain * (y[t] - x_pred[t](0));
    Mat2 ikh = Mat2::Identity();
    ikh.col(0) -= gain;
    p_filt[t] = ikh * p_pred[t];
  }
  std::vector<Vec2> x_smooth(n);
  x_smooth[n - 1] = x_filt[n - 1];
  for (std::size_t t = n - 1; t-- > 1;) {
    const Mat2 c = p_filt[t] * f.transpose() * p_pred[t + 1].inverse();
    x_smooth[t] = x_filt[t] + c * (x_smooth[t + 1] - x_pred[t + 1]);
  }
  std::vector<double> out(n);
  out[0] = y[0];
  for (std::size_t t = 1; t < n; ++t) out[t] = x_smooth[t](0);
  return out;
}

SmoothResult kalman_smooth(const TrackSet& tracks, const KalmanSpec& spec) {
  spec.validate();
  SmoothResult result{tracks, false};
  if (tracks.frames < 2) {
    result.skipped = true;
    return result;
  }
  std::vector<double> series(tracks.frames);
  for (std::size_t i = 0; i < tracks.count; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      for (std::size_t t = 0; t < tracks.frames; ++t) series[t] = tracks.at(t, i)[axis];
      const auto smooth = kalman_smooth_series(series, spec);
      for (std::size_t t = 0; t < tracks.frames; ++t) result.tracks.at(t, i)[axis] = smooth[t];
    }
  }
  return result;
}

std::vector<double> idw_weights(const std::vector<double>& dist2) {
  std::vector<double> w(dist2.size(), 0.0);
  for (std::size_t i = 0; i < dist2.size(); ++i) {
    if (dist2[i] == 0.0) {
      w[i] = 1.0;
      return w;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < dist2.size(); ++i) {
    w[i] = 1.0 / dist2[i];
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

InterpolationPlan plan_interpolation(const TrackSet& tracks, const ForegroundMask& mask, std::size_t k) {
  if (k == 0) throw ParameterError("interpolation needs k >= 1");
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  InterpolationPlan plan;
  plan.height = h;
  plan.width = w;

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> tracked_at(h * w, kNone);
  std::vector<std::size_t> anchors;  // indices into tracks, those inside the mask
  std::vector<KdTree<2>::Point> anchor_uv;
  for (std::size_t i = 0; i < tracks.count; ++i) {
    const int u = tracks.anchor_u[i];
    const int v = tracks.anchor_v[i];
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= w || static_cast<std::size_t>(v) >= h) {
      throw ParameterError("track anchor (" + std::to_string(u) + "," + std::to_string(v) + ") outside the image");
    }
    const auto px = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
    if (!mask.at(static_cast<std::size_t>(v), static_cast<std::size_t>(u)) || tracked_at[px] != kNone) continue;
    tracked_at[px] = i;
    anchors.push_back(i);
    anchor_uv.push_back({static_cast<double>(u), static_cast<double>(v)});
  }
  if (anchors.empty() && !mask.empty()) {
    throw PipelineError("foreground mask is non-empty but no tracked point lies inside it");
  }
  const KdTree<2> tree(std::move(anchor_uv));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      PixelSource src;
      src.row = r;
      src.col = c;
      if (const auto i = tracked_at[r * w + c]; i != kNone) {
        src.tracked = true;
        src.tracks = {i};
        src.weights = {1.0};
      } else {
        const auto nn = tree.knn({static_cast<double>(c), static_cast<double>(r)}, std::min(k, tree.size()));
        std::vector<double> d2;
        for (const auto& n : nn) {
          src.tracks.push_back(anchors[n.index]);
          d2.push_back(n.dist2);
        }
        src.weights = idw_weights(d2);
      }
      plan.pixels.push_back(std::move(src));
    }
  }
  return plan;
}

PointGrid build_point_grid(const TrackSet& tracks, const ForegroundMask& mask, const CameraIntrinsics& cam,
                           std::size_t height, std::size_t width, std::size_t k) {
  if (mask.height() != height || mask.width() != width) {
    throw ShapeError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     " does not match grid " + std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t frames = tracks.frames;
  if (frames == 0) throw ShapeError("track set has no frames");
  TensorF grid({frames, height, width, 3});
  if (mask.empty()) return PointGrid(std::move(grid));

  const InterpolationPlan plan = plan_interpolation(tracks, mask, k);
  // Projected trajectories of every track, computed once.
  std::vector<Eigen::Vector3d> projected(frames * tracks.count);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < tracks.count; ++i) projected[t * tracks.count + i] = project_normalized(tracks.at(t, i), cam);
  }
  for (const auto& src : plan.pixels) {
    for (std::size_t t = 0; t < frames; ++t) {
      Eigen::Vector3d value = Eigen::Vector3d::Zero();
      if (src.tracked) {
        value = projected[t * tracks.count + src.tracks[0]];
      } else {
        for (std::size_t j = 0; j < src.tracks.size(); ++j) {
          value += src.weights[j] * projected[t * tracks.count + src.tracks[j]];
        }
      }
      const std::size_t base = ((t * height + src.row) * width + src.col) * 3;
      for (int a = 0; a < 3; ++a) grid[base + static_cast<std::size_t>(a)] = static_cast<float>(value[a]);
    }
  }
  grid.validate_finite();
  return PointGrid(std::move(grid));
}

GridPoints grid_to_points(const PointGrid& grid, const ForegroundMask& mask) {
  if (mask.height() != grid.height() || mask.width() != grid.width()) {
    throw ShapeError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     " does not match point grid " + shape_string(grid.tensor().dims()));
  }
  GridPoints out;
  out.frames = grid.frames();
  for (std::size_t r = 0; r < grid.height(); ++r) {
    for (std::size_t c = 0; c < grid.width(); ++c) {
      if (mask.at(r, c)) out.pixels.push_back({r, c});
    }
  }
  out.count = out.pixels.size();
  out.values.resize(out.frames * out.count * 3);
  const std::size_t hw = grid.height() * grid.width();
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t i = 0; i < out.count; ++i) {
      const std::size_t px = out.pixels[i][0] * grid.width() + out.pixels[i][1];
      for (std::size_t a = 0; a < 3; ++a) {
        out.values[(t * out.count + i) * 3 + a] = grid.tensor()[(t * hw + px) * 3 + a];
      }
    }
  }
  return out;
}

PointGrid scatter_points(const GridPoints& points, std::size_t height, std::size_t width) {
  TensorF grid({points.frames, height, width, 3});
  for (std::size_t t = 0; t < points.frames; ++t) {
    for (std::size_t i = 0; i < points.count; ++i) {
      const auto [r, c] = points.pixels[i];
      if (r >= height || c >= width) throw ShapeError("scatter pixel outside the grid");
      const std::size_t base = ((t * height + r) * width + c) * 3;
      for (std::size_t a = 0; a < 3; ++a) {
        grid[base + a] = static_cast<float>(points.values[(t * points.count + i) * 3 + a]);
      }
    }
  }
  return PointGrid(std::move(grid));
}

}  // namespace pointvid
