#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace pointvid {

/// [T, N, 3] world-space trajectories, double precision.
struct PointBatch {
  std::size_t frames = 0;
  std::size_t count = 0;
  std::vector<double> values;

  PointBatch() = default;
  PointBatch(std::size_t frames, std::size_t count);
  PointBatch(std::size_t frames, std::size_t count, std::vector<double> values);

  double& at(std::size_t t, std::size_t i, std::size_t axis) { return values[(t * count + i) * 3 + axis]; }
  double at(std::size_t t, std::size_t i, std::size_t axis) const { return values[(t * count + i) * 3 + axis]; }

  /// Frame t as N x 3 values.
  std::span<const double> frame(std::size_t t) const { return std::span(values).subspan(t * count * 3, count * 3); }
};

/// kNN pairs on the reference frame and their rest lengths.
struct NeighborGraph {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // i < j, sorted, unique
  std::vector<double> rest_dist;
  std::size_t k = 0;
};

inline constexpr std::size_t kDefaultGraphNeighbors = 8;

/// `points` holds N x 3 coordinates. Requires N > k.
NeighborGraph build_neighbor_graph(std::span<const double> points, std::size_t k = kDefaultGraphNeighbors);

/// Weights of the reconstruction terms, the overall objective, and the regularization cadence.
struct LossWeights {
  double c0 = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double lambda_diff = 1.0;
  double lambda_recon = 1.0;
  double lambda_rigid = 1.0;
  int cadence_k = 5;

  LossWeights() = default;
  /// Throws ParameterError on any negative weight or cadence_k < 1.
  LossWeights(double c0, double c1, double c2, double lambda_diff, double lambda_recon, double lambda_rigid,
              int cadence_k = 5);

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the predicted batch
};

/// Raw position, velocity and acceleration terms, each a sum over frames of the
/// mean-over-points Euclidean norm.
std::array<double, 3> recon_terms(const PointBatch& pred, const PointBatch& truth);

/// c0 * position + c1 * velocity + c2 * acceleration, with its analytic gradient.
/// Zero-length residuals contribute a zero subgradient.
LossValue recon_loss(const PointBatch& pred, const PointBatch& truth, const LossWeights& w);

/// Sum over frames >= 1 and graph pairs of (dist - rest)^2. Rest lengths are constants.
LossValue rigid_loss(const PointBatch& pred, const NeighborGraph& graph);

double total_loss(double l_diff, double l_recon, double l_rigid, const LossWeights& w);

/// Ratio rule shared by the c and lambda calibrations: weight[0] = 1 and
/// weight[i] = mean[0] / mean[i]; a zero mean yields weight 0 and sets `warned`.
struct BalancedWeights {
  std::array<double, 3> weights{1.0, 0.0, 0.0};
  bool warned = false;
};
BalancedWeights balance_to_first(const std::array<double, 3>& means);

/// Calibrates c0..c2 from (initial prediction, ground truth) pairs.
BalancedWeights calibrate_c(const std::vector<std::pair<PointBatch, PointBatch>>& samples);

/// Central differences of `f` at `x`, one coordinate at a time.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                                double h);

}  // namespace pointvid
