#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "sandbot/geometry.hpp"
#include "sandbot/planner.hpp"

namespace oracle {

using sandbot::Mat3;
using sandbot::MatX;
using sandbot::RigidTransform;
using sandbot::Vec3;

struct OrientedBox {
  Vec3 center;
  Mat3 axes;  // columns
  Vec3 half;
};

inline OrientedBox posed_box(const Vec3& half, const Vec3& local_center, const RigidTransform& pose) {
  return {pose.apply(local_center), pose.R, half};
}

/// Largest separation over the 15 separating-axis candidates. Positive means
/// disjoint by at least that much along some axis.
inline double sat_margin(const OrientedBox& a, const OrientedBox& b) {
  std::vector<Vec3> axes;
  for (int i = 0; i < 3; ++i) axes.push_back(a.axes.col(i));
  for (int i = 0; i < 3; ++i) axes.push_back(b.axes.col(i));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const Vec3 c = a.axes.col(i).cross(b.axes.col(j));
      if (c.norm() > 1e-9) axes.push_back(c.normalized());
    }
  const Vec3 t = b.center - a.center;
  double best = -std::numeric_limits<double>::infinity();
  for (const Vec3& L : axes) {
    double ra = 0, rb = 0;
    for (int i = 0; i < 3; ++i) {
      ra += a.half(i) * std::abs(a.axes.col(i).dot(L));
      rb += b.half(i) * std::abs(b.axes.col(i).dot(L));
    }
    best = std::max(best, std::abs(t.dot(L)) - ra - rb);
  }
  return best;
}

inline RigidTransform random_pose(std::mt19937_64& rng, double spread) {
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(-spread, spread);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI);
  Vec3 axis(g(rng), g(rng), g(rng));
  return RigidTransform::from_axis_angle(axis, ang(rng), Vec3(u(rng), u(rng), u(rng)));
}

/// Minimum over all task orders by enumeration. Node 0 is home.
inline double exhaustive_sequence_min(const MatX& cost) {
  std::vector<int> order(cost.rows() - 1);
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = cost(0, order[0] + 1);
    for (std::size_t k = 1; k < order.size(); ++k) c += cost(order[k - 1] + 1, order[k] + 1);
    best = std::min(best, c);
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

inline MatX random_cost_matrix(int tasks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  MatX c = MatX::Zero(tasks + 1, tasks + 1);
  for (int i = 0; i <= tasks; ++i)
    for (int j = 1; j <= tasks; ++j)
      if (i != j) c(i, j) = u(rng);
  return c;
}

}  // namespace oracle
