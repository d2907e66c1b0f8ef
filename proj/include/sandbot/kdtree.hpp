/**
 * @file kdtree.hpp
 * @brief Static 3-D k-d tree for nearest-neighbour queries on point clouds.
 */
#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "sandbot/common.hpp"

namespace sandbot {

struct Neighbor {
  std::size_t index;
  double sq_distance;
};

class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points) : points_(&points) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points.size());
    if (!points.empty()) root_ = build(0, points.size(), 0);
  }

  bool empty() const { return root_ < 0; }

  Neighbor nearest(const Vec3& query) const {
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    if (!empty()) nearest_impl(root_, query, best);
    return best;
  }

  /// The k nearest points, closest first. Ties are broken by index so that
  /// results do not depend on traversal order.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    auto worse = [](const Neighbor& a, const Neighbor& b) {
      return a.sq_distance < b.sq_distance ||
             (a.sq_distance == b.sq_distance && a.index < b.index);
    };
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
    if (!empty() && k > 0) knn_impl(root_, query, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % 3;
    const std::size_t mid = begin + (end - begin) / 2;
    const auto& pts = *points_;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return pts[a](axis) < pts[b](axis) ||
                              (pts[a](axis) == pts[b](axis) && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void nearest_impl(int id, const Vec3& q, Neighbor& best) const {
    const Node& node = nodes_[id];
    const Vec3& p = (*points_)[node.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best.sq_distance || (d2 == best.sq_distance && node.point < best.index)) {
      best = {node.point, d2};
    }
    const double diff = q(node.axis) - p(node.axis);
    const int near = diff <= 0 ? node.left : node.right;
    const int far = diff <= 0 ? node.right : node.left;
    if (near >= 0) nearest_impl(near, q, best);
    if (far >= 0 && diff * diff <= best.sq_distance) nearest_impl(far, q, best);
  }

  template <typename Heap>
  void knn_impl(int id, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[id];
    const Vec3& p = (*points_)[node.point];
    const Neighbor cand{node.point, (p - q).squaredNorm()};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (cand.sq_distance < heap.top().sq_distance ||
               (cand.sq_distance == heap.top().sq_distance && cand.index < heap.top().index)) {
      heap.pop();
      heap.push(cand);
    }
    const double diff = q(node.axis) - p(node.axis);
    const int near = diff <= 0 ? node.left : node.right;
    const int far = diff <= 0 ? node.right : node.left;
    if (near >= 0) knn_impl(near, q, k, heap);
    if (far >= 0 && (heap.size() < k || diff * diff <= heap.top().sq_distance)) {
      knn_impl(far, q, k, heap);
    }
  }

  const std::vector<Vec3>* points_ = nullptr;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace sandbot
