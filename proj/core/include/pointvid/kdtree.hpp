#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace pointvid {

/// Static k-d tree over a fixed point set.
///
/// Queries return neighbors ordered by (squared distance, index), so results are fully
/// deterministic even with duplicate coordinates.
template <std::size_t Dim>
class KdTree {
 public:
  using Point = std::array<double, Dim>;

  struct Neighbor {
    std::size_t index;
    double dist2;
  };

  KdTree() = default;

  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points_.size());
    if (!points_.empty()) root_ = build(0, points_.size(), 0);
  }

  std::size_t size() const noexcept { return points_.size(); }
  const Point& point(std::size_t i) const { return points_[i]; }

  /// The k nearest points to `query`. `exclude` (if < size()) is skipped, used for self-queries.
  std::vector<Neighbor> knn(const Point& query, std::size_t k,
                            std::size_t exclude = std::numeric_limits<std::size_t>::max()) const {
    std::vector<Neighbor> best;
    if (k == 0 || root_ < 0) return best;
    best.reserve(k + 1);
    search(root_, query, k, exclude, best);
    return best;
  }

 private:
  struct Node {
    std::size_t point;  // index into points_
    int axis;
    int left = -1;
    int right = -1;
  };

  static bool closer(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }

  int build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % static_cast<int>(Dim);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       const double pa = points_[a][static_cast<std::size_t>(axis)];
                       const double pb = points_[b][static_cast<std::size_t>(axis)];
                       return pa < pb || (pa == pb && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void offer(const Neighbor& n, std::size_t k, std::vector<Neighbor>& best) const {
    if (best.size() == k && !closer(n, best.back())) return;
    auto pos = std::upper_bound(best.begin(), best.end(), n, closer);
    best.insert(pos, n);
    if (best.size() > k) best.pop_back();
  }

  void search(int node_id, const Point& q, std::size_t k, std::size_t exclude, std::vector<Neighbor>& best) const {
    if (node_id < 0) return;
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    const Point& p = points_[node.point];
    if (node.point != exclude) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < Dim; ++a) d2 += (p[a] - q[a]) * (p[a] - q[a]);
      offer({node.point, d2}, k, best);
    }
    const double diff = q[static_cast<std::size_t>(node.axis)] - p[static_cast<std::size_t>(node.axis)];
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    search(near, q, k, exclude, best);
    // <= keeps equal-distance candidates reachable for the index tie-break.
    if (best.size() < k || diff * diff <= best.back().dist2) search(far, q, k, exclude, best);
  }

  std::vector<Point> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace pointvid
