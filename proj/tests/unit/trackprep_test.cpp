#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pointvid/camera.hpp"
#include "pointvid/error.hpp"
#include "pointvid/kdtree.hpp"
#include "pointvid/scene.hpp"
#include "pointvid/trackprep.hpp"

namespace {

using namespace pointvid;
using Eigen::Vector3d;

TrackSet static_tracks(std::size_t frames, std::size_t count) {
  TrackSet t;
  t.frames = frames;
  t.count = count;
  t.world.assign(frames * count, Vector3d(0.1, -0.2, 4.0));
  t.anchor_u.assign(count, 0);
  t.anchor_v.assign(count, 0);
  t.object_id.assign(count, 0);
  return t;
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const auto t = static_tracks(5, 7);
  NoiseSpec spec;
  spec.seed = 11;
  const auto out = inject_noise(t, spec);
  EXPECT_EQ(out.world, t.world);
}

TEST(Noise, EmpiricalVarianceAndFrameZero) {
  const auto t = static_tracks(4, 20000);
  NoiseSpec spec;
  spec.sigma = 0.01;
  spec.seed = 5;
  const auto out = inject_noise(t, spec);
  for (std::size_t i = 0; i < t.count; ++i) ASSERT_EQ(out.at(0, i), t.at(0, i));
  for (std::size_t f = 1; f < t.frames; ++f) {
    for (int axis = 0; axis < 3; ++axis) {
      double mean = 0, sq = 0;
      for (std::size_t i = 0; i < t.count; ++i) {
        const double d = out.at(f, i)[axis] - t.at(f, i)[axis];
        mean += d;
        sq += d * d;
      }
      mean /= static_cast<double>(t.count);
      const double var = sq / static_cast<double>(t.count) - mean * mean;
      EXPECT_NEAR(var, 1e-4, 0.2e-4);
    }
  }
}

TEST(Noise, SameSeedSameOutput) {
  const auto t = static_tracks(6, 50);
  NoiseSpec spec;
  spec.sigma = 0.05;
  spec.outlier_prob = 0.1;
  spec.seed = 99;
  EXPECT_EQ(inject_noise(t, spec).world, inject_noise(t, spec).world);
  auto other = spec;
  other.seed = 100;
  EXPECT_NE(inject_noise(t, spec).world, inject_noise(t, other).world);
}

TEST(Kalman, LinearTrackIsExact) {
  std::vector<double> y(12);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = 0.7 - 0.13 * static_cast<double>(t);
  const auto s = kalman_smooth_series(y, KalmanSpec{});
  for (std::size_t t = 0; t < y.size(); ++t) EXPECT_NEAR(s[t], y[t], 1e-6);
}

TEST(Kalman, SingleFrameIsSkipped) {
  const auto t = static_tracks(1, 3);
  const auto r = kalman_smooth(t, KalmanSpec{});
  EXPECT_TRUE(r.skipped);
  EXPECT_EQ(r.tracks.world, t.world);
}

TEST(Kalman, RejectsNonPositiveVariances) {
  EXPECT_THROW(kalman_smooth_series({1, 2, 3}, KalmanSpec{0.0, 1.0}), ValidationError);
  EXPECT_THROW(kalman_smooth_series({1, 2, 3}, KalmanSpec{1.0, -1.0}), ValidationError);
}

TEST(Kalman, MonteCarloReducesRoughness) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  constexpr double sigma = 0.02;
  constexpr std::size_t frames = 8;
  double rough_in = 0.0, rough_out = 0.0, worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    TrackSet clean = static_tracks(frames, 1);
    const Vector3d p0(g(rng), g(rng), 4.0 + 0.2 * g(rng));
    const Vector3d v(0.05 * g(rng), 0.05 * g(rng), 0.05 * g(rng));
    for (std::size_t t = 0; t < frames; ++t) clean.at(t, 0) = p0 + static_cast<double>(t) * v;
    const auto noisy = inject_noise(clean, NoiseSpec{sigma, 0.0, 5.0, static_cast<std::uint64_t>(trial)});
    const auto smooth = kalman_smooth(noisy, KalmanSpec{}).tracks;
    for (std::size_t t = 2; t < frames; ++t) {
      rough_in += (noisy.at(t, 0) - 2 * noisy.at(t - 1, 0) + noisy.at(t - 2, 0)).squaredNorm();
      rough_out += (smooth.at(t, 0) - 2 * smooth.at(t - 1, 0) + smooth.at(t - 2, 0)).squaredNorm();
    }
    for (std::size_t t = 0; t < frames; ++t) {
      worst = std::max(worst, (smooth.at(t, 0) - clean.at(t, 0)).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LE(rough_out, 0.5 * rough_in);
  EXPECT_LE(worst, 3 * sigma);
}

TEST(Idw, ExactHitAndEquidistant) {
  const auto hit = idw_weights({4.0, 0.0, 1.0});
  EXPECT_EQ(hit, (std::vector<double>{0.0, 1.0, 0.0}));
  const auto eq = idw_weights({2.0, 2.0, 2.0});
  for (double w : eq) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  const auto w = idw_weights({1.0, 4.0});
  EXPECT_DOUBLE_EQ(w[0], 0.8);
  EXPECT_DOUBLE_EQ(w[1], 0.2);
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  std::vector<KdTree<2>::Point> pts(500);
  for (auto& p : pts) {
    const auto v = pvtest::uniform_values(rng, 2, 0, 32);
    p = {v[0], v[1]};
  }
  const KdTree<2> tree(pts);
  for (int q = 0; q < 200; ++q) {
    const auto v = pvtest::uniform_values(rng, 2, -2, 34);
    const KdTree<2>::Point query{v[0], v[1]};
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double dx = pts[i][0] - query[0], dy = pts[i][1] - query[1];
      all.emplace_back(dx * dx + dy * dy, i);
    }
    std::sort(all.begin(), all.end());
    const auto nn = tree.knn(query, 5);
    ASSERT_EQ(nn.size(), 5u);
    for (std::size_t m = 0; m < 5; ++m) {
      EXPECT_EQ(nn[m].index, all[m].second);
      EXPECT_DOUBLE_EQ(nn[m].dist2, all[m].first);
    }
  }
}

// Three anchors around an untracked centre pixel at equal distance.
TEST(PointGrid, EquidistantPixelAveragesTrajectories) {
  const auto cam = default_camera(3, 3);
  TrackSet t = static_tracks(2, 3);
  t.anchor_u = {0, 2, 1};
  t.anchor_v = {1, 1, 0};
  t.world = {Vector3d(-0.1, 0.0, 3), Vector3d(0.1, 0.0, 3), Vector3d(0.0, 0.1, 3),
             Vector3d(-0.1, 0.1, 4), Vector3d(0.1, 0.1, 4), Vector3d(0.0, 0.2, 5)};
  ForegroundMask mask(3, 3);
  mask.set(1, 0, true);
  mask.set(1, 2, true);
  mask.set(0, 1, true);
  mask.set(1, 1, true);
  const auto grid = build_point_grid(t, mask, cam, 3, 3);
  for (std::size_t f = 0; f < 2; ++f) {
    const Vector3d expect = (project_normalized(t.at(f, 0), cam) + project_normalized(t.at(f, 1), cam) +
                             project_normalized(t.at(f, 2), cam)) / 3.0;
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(grid.tensor()[((f * 3 + 1) * 3 + 1) * 3 + a], expect[a], 1e-6);
    }
  }
}

TEST(PointGrid, EmptyMaskIsAllZero) {
  const auto cam = default_camera(4, 4);
  const auto grid = build_point_grid(static_tracks(3, 0), ForegroundMask(4, 4), cam, 4, 4);
  for (float x : grid.tensor().data()) EXPECT_EQ(x, 0.0f);
}

TEST(PointGrid, MaskWithoutTracksIsPipelineError) {
  const auto cam = default_camera(4, 4);
  ForegroundMask mask(4, 4);
  mask.set(2, 2, true);
  auto t = static_tracks(3, 1);  // anchor at (0,0), outside the mask
  EXPECT_THROW(build_point_grid(t, mask, cam, 4, 4), PipelineError);
}

TEST(PointGrid, RandomScenesSatisfyAlgorithmPostconditions) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto spec = random_scene(seed, 8, 32, 32);
    const auto states = simulate(spec);
    const auto mask = render(spec, states).masks[0];
    const auto tracks = extract_tracks(spec, states, 4);
    const auto grid = build_point_grid(tracks, mask, spec.camera, 32, 32);
    EXPECT_EQ(grid.max_background_magnitude(mask), 0.0f);
    const auto plan = plan_interpolation(tracks, mask);
    EXPECT_EQ(plan.pixels.size(), mask.count());
    for (const auto& px : plan.pixels) {
      double sum = 0.0;
      for (double w : px.weights) {
        EXPECT_GE(w, 0.0);
        sum += w;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
      if (!px.tracked) {
        EXPECT_EQ(px.tracks.size(), std::min<std::size_t>(3, tracks.count));
      }
    }
  }
}

TEST(GridPoints, RowMajorAndRoundTrip) {
  TensorF t({2, 2, 3, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01f * static_cast<float>(i + 1);
  ForegroundMask mask(2, 3);
  mask.set(1, 0, true);
  mask.set(0, 2, true);
  const auto pts = grid_to_points(PointGrid(t), mask);
  ASSERT_EQ(pts.count, 2u);
  EXPECT_EQ(pts.pixels[0], (std::array<std::size_t, 2>{0, 2}));
  EXPECT_EQ(pts.pixels[1], (std::array<std::size_t, 2>{1, 0}));
  const auto back = scatter_points(pts, 2, 3);
  for (std::size_t f = 0; f < 2; ++f) {
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t i = ((f * 2 + r) * 3 + c) * 3 + a;
          EXPECT_EQ(back.tensor()[i], mask.at(r, c) ? t[i] : 0.0f);
        }
      }
    }
  }
  EXPECT_EQ(grid_to_points(PointGrid(t), ForegroundMask(2, 3)).count, 0u);
  EXPECT_THROW(grid_to_points(PointGrid(t), ForegroundMask(3, 3)), ShapeError);
}

}  // namespace
