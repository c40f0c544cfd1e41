#include "pointvid/geomreg.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "pointvid/error.hpp"
#include "pointvid/kdtree.hpp"

namespace pointvid {

PointBatch::PointBatch(std::size_t frames_, std::size_t count_)
    : frames(frames_), count(count_), values(frames_ * count_ * 3, 0.0) {}

PointBatch::PointBatch(std::size_t frames_, std::size_t count_, std::vector<double> values_)
    : frames(frames_), count(count_), values(std::move(values_)) {
  if (values.size() != frames * count * 3) throw ShapeError("point batch values do not match [T,N,3]");
}

NeighborGraph build_neighbor_graph(std::span<const double> points, std::size_t k) {
  if (points.size() % 3 != 0) throw ShapeError("neighbor graph input must be N x 3");
  const std::size_t n = points.size() / 3;
  if (n <= k) {
    throw ParameterError("neighbor graph needs more than k=" + std::to_string(k) + " points, got " +
                         std::to_string(n));
  }
  std::vector<KdTree<3>::Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = {points[3 * i], points[3 * i + 1], points[3 * i + 2]};
  const KdTree<3> tree(pts);
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : tree.knn(pts[i], k, i)) unique.insert({std::min(i, nb.index), std::max(i, nb.index)});
  }
  NeighborGraph g;
  g.k = k;
  g.pairs.assign(unique.begin(), unique.end());
  g.rest_dist.reserve(g.pairs.size());
  for (const auto& [i, j] : g.pairs) {
    const double dx = pts[i][0] - pts[j][0];
    const double dy = pts[i][1] - pts[j][1];
    const double dz = pts[i][2] - pts[j][2];
    g.rest_dist.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return g;
}

LossWeights::LossWeights(double c0_, double c1_, double c2_, double ld, double lr, double lg, int k)
    : c0(c0_), c1(c1_), c2(c2_), lambda_diff(ld), lambda_recon(lr), lambda_rigid(lg), cadence_k(k) {
  validate();
}

void LossWeights::validate() const {
  for (double x : {c0, c1, c2, lambda_diff, lambda_recon, lambda_rigid}) {
    if (!(x >= 0.0)) throw ParameterError("loss weights must be non-negative");
  }
  if (cadence_k < 1) throw ParameterError("regularization cadence k must be >= 1");
}

namespace {

void check_same_shape(const PointBatch& a, const PointBatch& b) {
  if (a.frames != b.frames || a.count != b.count) {
    throw ShapeError("point batches differ: [" + std::to_string(a.frames) + "," + std::to_string(a.count) +
                     ",3] vs [" + std::to_string(b.frames) + "," + std::to_string(b.count) + ",3]");
  }
}

// Adds weight * d(mean_i |r_i|)/dr_i, routed through `coef` onto the frames listed in `taps`.
// Returns mean_i |r_i|. `residual(i, axis)` evaluates r_i.
template <typename Residual, std::size_t Taps>
double accumulate_norm_term(const PointBatch& pred, const Residual& residual, const std::array<std::size_t, Taps>& taps,
                            const std::array<double, Taps>& coef, double weight, std::vector<double>* grad) {
  if (pred.count == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(pred.count);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.count; ++i) {
    const double r0 = residual(i, 0);
    const double r1 = residual(i, 1);
    const double r2 = residual(i, 2);
    const double norm = std::sqrt(r0 * r0 + r1 * r1 + r2 * r2);
    sum += norm;
    if (grad == nullptr || norm == 0.0 || weight == 0.0) continue;
    const double s = weight * inv_n / norm;
    for (std::size_t tap = 0; tap < Taps; ++tap) {
      double* g = grad->data() + (taps[tap] * pred.count + i) * 3;
      g[0] += coef[tap] * s * r0;
      g[1] += coef[tap] * s * r1;
      g[2] += coef[tap] * s * r2;
    }
  }
  return sum * inv_n;
}

std::array<double, 3> recon_terms_impl(const PointBatch& p, const PointBatch& gt, const std::array<double, 3>& c,
                                       std::vector<double>* grad) {
  check_same_shape(p, gt);
  std::array<double, 3> terms{0.0, 0.0, 0.0};
  for (std::size_t t = 0; t < p.frames; ++t) {
    auto res = [&](std::size_t i, std::size_t a) { return p.at(t, i, a) - gt.at(t, i, a); };
    terms[0] += accumulate_norm_term<decltype(res), 1>(p, res, {t}, {1.0}, c[0], grad);
  }
  for (std::size_t t = 1; t < p.frames; ++t) {
    auto res = [&](std::size_t i, std::size_t a) { return p.at(t, i, a) - p.at(t - 1, i, a); };
    terms[1] += accumulate_norm_term<decltype(res), 2>(p, res, {t, t - 1}, {1.0, -1.0}, c[1], grad);
  }
  for (std::size_t t = 2; t < p.frames; ++t) {
    auto res = [&](std::size_t i, std::size_t a) {
      return p.at(t, i, a) - 2.0 * p.at(t - 1, i, a) + p.at(t - 2, i, a);
    };
    terms[2] += accumulate_norm_term<decltype(res), 3>(p, res, {t, t - 1, t - 2}, {1.0, -2.0, 1.0}, c[2], grad);
  }
  return terms;
}

}  // namespace

std::array<double, 3> recon_terms(const PointBatch& pred, const PointBatch& truth) {
  return recon_terms_impl(pred, truth, {1.0, 1.0, 1.0}, nullptr);
}

LossValue recon_loss(const PointBatch& pred, const PointBatch& truth, const LossWeights& w) {
  w.validate();
  LossValue out;
  out.grad.assign(pred.values.size(), 0.0);
  const auto terms = recon_terms_impl(pred, truth, {w.c0, w.c1, w.c2}, &out.grad);
  out.value = w.c0 * terms[0] + w.c1 * terms[1] + w.c2 * terms[2];
  return out;
}

LossValue rigid_loss(const PointBatch& pred, const NeighborGraph& graph) {
  if (graph.rest_dist.size() != graph.pairs.size()) throw GraphError("graph rest lengths do not match its pairs");
  for (const auto& [i, j] : graph.pairs) {
    if (i >= pred.count || j >= pred.count) {
      throw GraphError("graph pair (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for N=" +
                       std::to_string(pred.count));
    }
  }
  LossValue out;
  out.grad.assign(pred.values.size(), 0.0);
  for (std::size_t t = 1; t < pred.frames; ++t) {
    for (std::size_t p = 0; p < graph.pairs.size(); ++p) {
      const auto [i, j] = graph.pairs[p];
      const double dx = pred.at(t, i, 0) - pred.at(t, j, 0);
      const double dy = pred.at(t, i, 1) - pred.at(t, j, 1);
      const double dz = pred.at(t, i, 2) - pred.at(t, j, 2);
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      const double e = d - graph.rest_dist[p];
      out.value += e * e;
      if (d == 0.0) continue;
      const double s = 2.0 * e / d;
      double* gi = out.grad.data() + (t * pred.count + i) * 3;
      double* gj = out.grad.data() + (t * pred.count + j) * 3;
      gi[0] += s * dx;
      gi[1] += s * dy;
      gi[2] += s * dz;
      gj[0] -= s * dx;
      gj[1] -= s * dy;
      gj[2] -= s * dz;
    }
  }
  return out;
}

double total_loss(double l_diff, double l_recon, double l_rigid, const LossWeights& w) {
  return w.lambda_diff * l_diff + w.lambda_recon * l_recon + w.lambda_rigid * l_rigid;
}

BalancedWeights balance_to_first(const std::array<double, 3>& means) {
  BalancedWeights out;
  if (means[0] == 0.0) {
    out.weights = {1.0, 0.0, 0.0};
    out.warned = true;
    return out;
  }
  out.weights[0] = 1.0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (means[i] == 0.0) {
      out.weights[i] = 0.0;
      out.warned = true;
    } else {
      out.weights[i] = means[0] / means[i];
    }
  }
  return out;
}

BalancedWeights calibrate_c(const std::vector<std::pair<PointBatch, PointBatch>>& samples) {
  if (samples.empty()) throw ParameterError("calibration needs at least one sample");
  std::array<double, 3> means{0.0, 0.0, 0.0};
  for (const auto& [pred, truth] : samples) {
    const auto terms = recon_terms(pred, truth);
    for (std::size_t i = 0; i < 3; ++i) means[i] += terms[i];
  }
  for (auto& m : means) m /= static_cast<double>(samples.size());
  return balance_to_first(means);
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                                double h) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace pointvid
