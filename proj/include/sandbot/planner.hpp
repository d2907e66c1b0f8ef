/**
 * @file planner.hpp
 * @brief GJK collision checking, single-query joint-space planning with
 * retreat repair, LSPB time parameterization and GA task sequencing.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sandbot/common.hpp"
#include "sandbot/dynamics.hpp"
#include "sandbot/geometry.hpp"

namespace sandbot {

struct ConvexShape {
  std::vector<Vec3> vertices;
  std::vector<std::vector<int>> faces;  // for export only

  static ConvexShape from_mesh(const ConvexMesh& m) { return {m.vertices, m.faces}; }
  static ConvexShape box(const Vec3& half_extents, const Vec3& center = Vec3::Zero()) {
    return from_mesh(make_box(half_extents, center));
  }

  void validate() const {
    require(vertices.size() >= 4, ErrorCode::InvalidArgument, "a solid needs at least 4 vertices");
    for (const auto& v : vertices) {
      require(v.allFinite(), ErrorCode::InvalidArgument, "shape vertices must be finite");
    }
    Vec3 mean = Vec3::Zero();
    for (const auto& v : vertices) mean += v;
    mean /= static_cast<double>(vertices.size());
    MatX P(vertices.size(), 3);
    for (std::size_t i = 0; i < vertices.size(); ++i) P.row(i) = (vertices[i] - mean).transpose();
    const Vec3 sv = Eigen::JacobiSVD<MatX>(P).singularValues();
    require(sv(2) > 1e-9 * sv(0), ErrorCode::InvalidArgument, "shape vertices are coplanar");
  }

  /// Farthest vertex along `dir` after posing.
  Vec3 support(const Vec3& dir, const RigidTransform& pose) const {
    const Vec3 local = pose.R.transpose() * dir;
    std::size_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const double d = vertices[i].dot(local);
      if (d > best_dot) {
        best_dot = d;
        best = i;
      }
    }
    return pose.apply(vertices[best]);
  }
};

// --- GJK --------------------------------------------------------------------

inline constexpr int kGjkMaxIterations = 64;

struct GjkResult {
  bool intersects = false;
  bool iteration_limit = false;  // answer forced to "intersecting"
  int iterations = 0;
  double distance = 0.0;  // separation when disjoint; an upper bound if want_distance is off
};

namespace detail {

/// Closest point to the origin on the convex hull of `simplex`; the simplex
/// is reduced to the smallest subset whose hull contains that point.
inline Vec3 closest_on_simplex(std::vector<Vec3>& simplex) {
  const int n = static_cast<int>(simplex.size());
  Vec3 best_point = simplex[0];
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_mask = 1;
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) idx.push_back(i);
    }
    const int k = static_cast<int>(idx.size());
    Vec3 point;
    if (k == 1) {
      point = simplex[idx[0]];
    } else {
      const Vec3& p0 = simplex[idx[0]];
      MatX D(3, k - 1);
      for (int j = 1; j < k; ++j) D.col(j - 1) = simplex[idx[j]] - p0;
      const MatX G = D.transpose() * D;
      Eigen::FullPivLU<MatX> lu(G);
      if (lu.rank() < k - 1) continue;
      const VecX mu = lu.solve(-(D.transpose() * p0));
      if ((mu.array() <= 1e-14).any() || mu.sum() >= 1.0 - 1e-14) continue;
      point = p0 + D * mu;
    }
    const double d2 = point.squaredNorm();
    if (d2 < best_d2 - 1e-15 || (d2 <= best_d2 + 1e-15 && k < __builtin_popcount(best_mask))) {
      best_d2 = d2;
      best_point = point;
      best_mask = mask;
    }
  }
  std::vector<Vec3> reduced;
  for (int i = 0; i < n; ++i) {
    if (best_mask & (1 << i)) reduced.push_back(simplex[i]);
  }
  simplex = std::move(reduced);
  return best_point;
}

inline bool origin_in_tetrahedron(const std::vector<Vec3>& s) {
  if (s.size() != 4) return false;
  for (int i = 0; i < 4; ++i) {
    const Vec3& a = s[(i + 1) % 4];
    const Vec3& b = s[(i + 2) % 4];
    const Vec3& c = s[(i + 3) % 4];
    const Vec3 n = (b - a).cross(c - a);
    const double side_opposite = n.dot(s[i] - a);
    const double side_origin = n.dot(-a);
    if (side_opposite * side_origin < 0) return false;
  }
  return true;
}

}  // namespace detail

/**
 * GJK on the Minkowski difference A - B. The origin is treated as contained
 * once the closest simplex point is within `tolerance` of it.
 */
inline GjkResult gjk(const ConvexShape& a, const ConvexShape& b, const RigidTransform& pose_a,
                     const RigidTransform& pose_b, double tolerance = 1e-9,
                     bool want_distance = true) {
  auto support = [&](const Vec3& d) { return a.support(d, pose_a) - b.support(-d, pose_b); };
  GjkResult r;
  std::vector<Vec3> simplex{support(pose_a.T - pose_b.T + Vec3(1e-3, 2e-3, 3e-3))};
  Vec3 v = simplex[0];
  // Once a separating plane is seen the answer is fixed; the loop goes on
  // only to tighten the distance, and only if asked.
  bool separated = false;
  for (int it = 1; it <= kGjkMaxIterations; ++it) {
    r.iterations = it;
    const double vv = v.squaredNorm();
    if (vv <= tolerance * tolerance) {
      r.intersects = true;
      return r;
    }
    const Vec3 w = support(-v);
    const double vw = v.dot(w);
    if (vw > tolerance * std::sqrt(vv)) {
      separated = true;
      if (!want_distance) {
        r.distance = std::sqrt(vv);
        return r;
      }
    }
    // No progress towards the origin: v is the closest point.
    if (vv - vw <= 1e-12 * vv) {
      r.distance = std::sqrt(vv);
      r.intersects = !separated && r.distance <= tolerance;
      return r;
    }
    simplex.push_back(w);
    if (!separated && detail::origin_in_tetrahedron(simplex)) {
      r.intersects = true;
      return r;
    }
    v = detail::closest_on_simplex(simplex);
  }
  r.distance = std::sqrt(v.squaredNorm());
  r.iteration_limit = !separated;
  r.intersects = !separated;
  return r;
}

inline bool gjk_intersects(const ConvexShape& a, const ConvexShape& b, const RigidTransform& pose_a,
                           const RigidTransform& pose_b) {
  return gjk(a, b, pose_a, pose_b, 1e-9, false).intersects;
}

// --- robot geometry and collision checking ----------------------------------

/// Frames a robot part can ride on.
enum class RobotFrame { Carriage, Link1, Link2, EndEffector };

struct RobotPart {
  ConvexShape shape;  // in the frame's local coordinates
  RobotFrame frame = RobotFrame::EndEffector;
};

struct PosedShape {
  ConvexShape shape;
  RigidTransform pose;
};

inline RigidTransform frame_pose(const RobotModel& model, const Vec4& q, RobotFrame frame) {
  const Vec3 base(q(0), q(1), 0.0);
  switch (frame) {
    case RobotFrame::Carriage:
      return RigidTransform::from_axis_angle(Vec3::UnitZ(), 0.0, base);
    case RobotFrame::Link1:
      return RigidTransform::from_axis_angle(Vec3::UnitZ(), q(2), base);
    case RobotFrame::Link2: {
      const Vec3 elbow = base + model.l1 * Vec3(std::cos(q(2)), std::sin(q(2)), 0.0);
      return RigidTransform::from_axis_angle(Vec3::UnitZ(), q(2) + q(3), elbow);
    }
    case RobotFrame::EndEffector:
    default:
      return RigidTransform::planar(forward_kinematics(model, q));
  }
}

struct PlannerParams {
  double max_step = 5e-3;        // m of motion of any robot point per collision check
  double retreat_step = 0.02;    // m
  double retreat_max = 0.10;     // m
  int random_samples = 200;
  std::uint64_t seed = 11;
  Vec3 belt_normal = Vec3::UnitX();
  double pinv_damping = 1e-6;
};

struct PlannerContext {
  RobotModel model;
  std::vector<RobotPart> robot;
  std::vector<PosedShape> obstacles;
  PlannerParams params;
};

inline bool in_collision(const PlannerContext& ctx, const Vec4& q) {
  for (const auto& part : ctx.robot) {
    const RigidTransform pose = frame_pose(ctx.model, q, part.frame);
    for (const auto& obs : ctx.obstacles) {
      if (gjk_intersects(part.shape, obs.shape, pose, obs.pose)) return true;
    }
  }
  return false;
}

/// Per-joint bound on how far any robot point moves per unit joint motion.
inline Vec4 joint_lever_arms(const PlannerContext& ctx) {
  double r_ee = 0.0, r_link2 = 0.0, r_link1 = 0.0;
  for (const auto& part : ctx.robot) {
    double r = 0.0;
    for (const auto& v : part.shape.vertices) r = std::max(r, v.head<2>().norm());
    if (part.frame == RobotFrame::EndEffector) r_ee = std::max(r_ee, r);
    if (part.frame == RobotFrame::Link2) r_link2 = std::max(r_link2, r);
    if (part.frame == RobotFrame::Link1) r_link1 = std::max(r_link1, r);
  }
  const double r2 = std::max(ctx.model.l2 + r_ee, r_link2);
  const double r1 = std::max(ctx.model.l1 + r2, r_link1);
  return {1.0, 1.0, r1, r2};
}

inline int segment_steps(const PlannerContext& ctx, const Vec4& a, const Vec4& b) {
  const double sweep = (b - a).cwiseAbs().dot(joint_lever_arms(ctx));
  return std::max(1, static_cast<int>(std::ceil(sweep / ctx.params.max_step)));
}

/// Dense samples of the straight joint-space segment, both ends included.
inline std::vector<Vec4> interpolate_segment(const PlannerContext& ctx, const Vec4& a,
                                             const Vec4& b) {
  const int n = segment_steps(ctx, a, b);
  std::vector<Vec4> out;
  out.reserve(n + 1);
  for (int i = 0; i <= n; ++i) out.push_back(i == n ? b : Vec4(a + (b - a) * (double(i) / n)));
  return out;
}

inline bool segment_free(const PlannerContext& ctx, const Vec4& a, const Vec4& b) {
  if (!ctx.model.joint_limits.contains(a) || !ctx.model.joint_limits.contains(b)) return false;
  for (const auto& q : interpolate_segment(ctx, a, b)) {
    if (in_collision(ctx, q)) return false;
  }
  return true;
}

struct Path {
  std::vector<Vec4> waypoints;  // dense, collision-checked samples
  std::vector<std::size_t> vias;  // indices of the corner configurations
  bool collision_checked = false;

  std::vector<Vec4> corners() const {
    std::vector<Vec4> out;
    for (auto i : vias) out.push_back(waypoints[i]);
    return out;
  }
};

inline Path path_through(const PlannerContext& ctx, const std::vector<Vec4>& corners) {
  Path p;
  p.waypoints.push_back(corners.front());
  p.vias.push_back(0);
  for (std::size_t i = 1; i < corners.size(); ++i) {
    const auto seg = interpolate_segment(ctx, corners[i - 1], corners[i]);
    p.waypoints.insert(p.waypoints.end(), seg.begin() + 1, seg.end());
    p.vias.push_back(p.waypoints.size() - 1);
  }
  p.collision_checked = true;
  return p;
}

/// Moves q by `distance` against the belt normal in task space via J^+.
inline Vec4 retreat(const PlannerContext& ctx, const Vec4& q, double distance) {
  // Several small steps keep the task-space motion close to a straight line.
  const int n = std::max(1, static_cast<int>(std::ceil(distance / 5e-3)));
  Vec4 out = q;
  for (int i = 0; i < n; ++i) {
    const Mat43 Jp = pseudo_inverse(jacobian(ctx.model, out), ctx.params.pinv_damping);
    Vec3 dx = Vec3::Zero();
    dx.head<2>() = -(distance / n) * ctx.params.belt_normal.head<2>();
    out += Jp * dx;
  }
  return out;
}

/**
 * Straight segment if free; otherwise back both ends away from the belt in
 * growing increments; otherwise seeded random via points.
 */
inline Path plan_single_query(const PlannerContext& ctx, const Vec4& q_start, const Vec4& q_goal) {
  if (!ctx.model.joint_limits.contains(q_start) || in_collision(ctx, q_start)) {
    throw Error(ErrorCode::InvalidEndpoint, "start configuration collides or violates limits");
  }
  if (!ctx.model.joint_limits.contains(q_goal) || in_collision(ctx, q_goal)) {
    throw Error(ErrorCode::InvalidEndpoint, "goal configuration collides or violates limits");
  }
  if (segment_free(ctx, q_start, q_goal)) return path_through(ctx, {q_start, q_goal});

  for (double r = ctx.params.retreat_step; r <= ctx.params.retreat_max + 1e-12;
       r += ctx.params.retreat_step) {
    const Vec4 a = retreat(ctx, q_start, r);
    const Vec4 b = retreat(ctx, q_goal, r);
    if (segment_free(ctx, q_start, a) && segment_free(ctx, a, b) && segment_free(ctx, b, q_goal)) {
      return path_through(ctx, {q_start, a, b, q_goal});
    }
  }

  std::mt19937_64 rng(ctx.params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& lim = ctx.model.joint_limits;
  for (int s = 0; s < ctx.params.random_samples; ++s) {
    Vec4 via;
    for (int j = 0; j < kJoints; ++j) via(j) = lim.lower(j) + unit(rng) * (lim.upper(j) - lim.lower(j));
    if (in_collision(ctx, via)) continue;
    if (segment_free(ctx, q_start, via) && segment_free(ctx, via, q_goal)) {
      return path_through(ctx, {q_start, via, q_goal});
    }
  }
  throw Error(ErrorCode::NoPathFound, "retreat repair and random via sampling both failed");
}

// --- path cost --------------------------------------------------------------

/// Sum over consecutive configurations of ||w .* (c(s+1) - c(s))||^2.
inline double path_cost(const std::vector<Vec4>& configs, const Vec4& w) {
  require(configs.size() >= 2, ErrorCode::InvalidArgument, "path cost needs two configurations");
  double sum = 0.0;
  for (std::size_t s = 0; s + 1 < configs.size(); ++s) {
    sum += w.cwiseProduct(configs[s + 1] - configs[s]).squaredNorm();
  }
  return sum;
}

/// Cost of a planned path, evaluated on its corner configurations so the
/// value does not depend on the collision-check resolution.
inline double path_cost(const Path& path, const Vec4& w) { return path_cost(path.corners(), w); }

// --- LSPB -------------------------------------------------------------------

struct TrajectorySample {
  double t = 0.0;
  Vec4 q = Vec4::Zero();
  Vec4 qdot = Vec4::Zero();
  Vec4 qddot = Vec4::Zero();
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }
};

struct SegmentProfile {
  double duration = 0.0;
  Vec4 cruise = Vec4::Zero();  // signed cruise speed per joint
  Vec4 accel = Vec4::Zero();   // signed blend acceleration per joint
  Vec4 blend = Vec4::Zero();   // blend time per joint
};

/// Shortest duration move of one joint under (v_max, a_max).
inline double trapezoid_time(double length, double v_max, double a_max) {
  if (length <= 0.0) return 0.0;
  if (length >= v_max * v_max / a_max) return length / v_max + v_max / a_max;
  return 2.0 * std::sqrt(length / a_max);
}

/// All joints start and stop together; each uses its own a_max and the
/// cruise speed that finishes exactly at the slowest joint's time.
inline SegmentProfile lspb_segment(const Vec4& a, const Vec4& b, const Vec4& v_max,
                                   const Vec4& a_max) {
  SegmentProfile p;
  const Vec4 d = b - a;
  for (int j = 0; j < kJoints; ++j) {
    p.duration = std::max(p.duration, trapezoid_time(std::abs(d(j)), v_max(j), a_max(j)));
  }
  if (p.duration <= 0.0) return p;
  for (int j = 0; j < kJoints; ++j) {
    const double L = std::abs(d(j));
    if (L == 0.0) continue;
    double v;
    if (trapezoid_time(L, v_max(j), a_max(j)) == p.duration) {
      // This joint sets the time and runs its own fastest profile.
      v = std::min(v_max(j), std::sqrt(L * a_max(j)));
    } else {
      const double aT = a_max(j) * p.duration;
      const double disc = std::max(aT * aT - 4.0 * a_max(j) * L, 0.0);
      v = 2.0 * a_max(j) * L / (aT + std::sqrt(disc));
    }
    const double sign = d(j) > 0 ? 1.0 : -1.0;
    p.cruise(j) = sign * v;
    p.accel(j) = sign * a_max(j);
    p.blend(j) = v / a_max(j);
  }
  return p;
}

inline TrajectorySample lspb_eval(const Vec4& a, const Vec4& b, const SegmentProfile& p, double t) {
  TrajectorySample s;
  s.t = t;
  for (int j = 0; j < kJoints; ++j) {
    const double tb = p.blend(j), v = p.cruise(j), acc = p.accel(j), T = p.duration;
    if (v == 0.0) {
      s.q(j) = a(j);
    } else if (t < tb) {
      s.q(j) = a(j) + 0.5 * acc * t * t;
      s.qdot(j) = acc * t;
      s.qddot(j) = acc;
    } else if (t <= T - tb) {
      s.q(j) = a(j) + 0.5 * acc * tb * tb + v * (t - tb);
      s.qdot(j) = v;
    } else {
      const double r = T - t;
      s.q(j) = b(j) - 0.5 * acc * r * r;
      s.qdot(j) = acc * r;
      s.qddot(j) = -acc;
    }
  }
  if (t >= p.duration) s.q = b;
  return s;
}

/**
 * Time-parameterizes the corner-to-corner segments of a path, stopping at
 * every corner. Samples every `dt` and always at segment ends.
 */
inline Trajectory lspb_parameterize(const std::vector<Vec4>& corners, const Vec4& v_max,
                                    const Vec4& a_max, double dt = 1e-3) {
  require((v_max.array() > 0).all() && (a_max.array() > 0).all(), ErrorCode::InvalidArgument,
          "LSPB limits must be positive");
  require(dt > 0.0 && !corners.empty(), ErrorCode::InvalidArgument, "LSPB needs dt > 0 and a path");
  Trajectory traj;
  traj.samples.push_back({0.0, corners.front(), Vec4::Zero(), Vec4::Zero()});
  double t0 = 0.0;
  for (std::size_t i = 1; i < corners.size(); ++i) {
    const SegmentProfile p = lspb_segment(corners[i - 1], corners[i], v_max, a_max);
    if (p.duration <= 0.0) continue;
    const int n = static_cast<int>(std::ceil(p.duration / dt - 1e-9));
    for (int k = 1; k <= n; ++k) {
      const double t = k == n ? p.duration : k * dt;
      TrajectorySample s = lspb_eval(corners[i - 1], corners[i], p, t);
      s.t = t0 + t;
      traj.samples.push_back(s);
    }
    t0 += p.duration;
  }
  return traj;
}

inline Trajectory lspb_parameterize(const Path& path, const Vec4& v_max, const Vec4& a_max,
                                    double dt = 1e-3) {
  return lspb_parameterize(path.corners(), v_max, a_max, dt);
}

// --- GA sequencing ----------------------------------------------------------

struct SandingTask {
  int face_id = 0;
  Vec4 q_start = Vec4::Zero();  // approach, backed off from the belt
  Vec4 q_goal = Vec4::Zero();   // first touch
  Vec3 normal = Vec3::UnitX();  // desired contact normal in task space
};

struct GaParams {
  int population_size = 200;
  double crossover_prob = 0.9;
  double mutation_prob = 0.1;
  int max_generations = 100;
  std::uint64_t seed = 3;
  Vec4 w{1.0, 1.0, 0.3, 0.3};
  int tournament_size = 3;
  bool straight_line_cost = false;

  void validate() const {
    require(population_size >= 2 && max_generations >= 0 && tournament_size >= 1,
            ErrorCode::InvalidArgument, "GA sizes out of range");
    require(crossover_prob >= 0 && crossover_prob <= 1 && mutation_prob >= 0 && mutation_prob <= 1,
            ErrorCode::InvalidArgument, "GA probabilities must lie in [0,1]");
    require((w.array() > 0).all(), ErrorCode::InvalidArgument, "GA weights must be positive");
  }
};

struct CostMatrix {
  /// Entry (i, j): cost from node i to node j; node 0 is home, node k + 1
  /// is task k.
  MatX cost;
  std::vector<std::vector<Path>> paths;
};

/// Transition costs between approach configurations, each planned once.
inline CostMatrix build_cost_matrix(const PlannerContext& ctx, const std::vector<SandingTask>& tasks,
                                    const Vec4& home, const GaParams& params) {
  const std::size_t n = tasks.size() + 1;
  std::vector<Vec4> nodes{home};
  for (const auto& t : tasks) nodes.push_back(t.q_start);
  CostMatrix m;
  m.cost = MatX::Zero(n, n);
  m.paths.assign(n, std::vector<Path>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 1; j < n; ++j) {
      if (i == j) continue;
      if (params.straight_line_cost) {
        m.cost(i, j) = path_cost(std::vector<Vec4>{nodes[i], nodes[j]}, params.w);
      } else {
        m.paths[i][j] = plan_single_query(ctx, nodes[i], nodes[j]);
        m.cost(i, j) = path_cost(m.paths[i][j], params.w);
      }
    }
  }
  return m;
}

inline double sequence_cost(const MatX& cost, const std::vector<int>& order) {
  double c = cost(0, order.front() + 1);
  for (std::size_t k = 1; k < order.size(); ++k) c += cost(order[k - 1] + 1, order[k] + 1);
  return c;
}

struct GaResult {
  std::vector<int> order;  // task indices
  double cost = 0.0;
  std::vector<double> best_history;
  std::vector<double> mean_history;
};

namespace detail {
inline std::vector<int> order_crossover(const std::vector<int>& p1, const std::vector<int>& p2,
                                        std::mt19937_64& rng) {
  const int n = static_cast<int>(p1.size());
  std::uniform_int_distribution<int> pick(0, n - 1);
  int a = pick(rng), b = pick(rng);
  if (a > b) std::swap(a, b);
  std::vector<int> child(n, -1);
  std::vector<char> used(n, 0);
  for (int i = a; i <= b; ++i) {
    child[i] = p1[i];
    used[p1[i]] = 1;
  }
  int pos = (b + 1) % n;
  for (int k = 0; k < n; ++k) {
    const int gene = p2[(b + 1 + k) % n];
    if (used[gene]) continue;
    child[pos] = gene;
    used[gene] = 1;
    pos = (pos + 1) % n;
  }
  return child;
}
}  // namespace detail

/// Permutation GA over a precomputed cost matrix.
inline GaResult ga_optimize(const MatX& cost, const GaParams& params) {
  params.validate();
  const int n = static_cast<int>(cost.rows()) - 1;
  require(n >= 1 && cost.cols() == cost.rows(), ErrorCode::InvalidArgument,
          "cost matrix must be square with at least one task");
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> member(0, params.population_size - 1);
  std::uniform_int_distribution<int> gene(0, n - 1);

  std::vector<std::vector<int>> pop(params.population_size, std::vector<int>(n));
  for (auto& c : pop) {
    std::iota(c.begin(), c.end(), 0);
    std::shuffle(c.begin(), c.end(), rng);
  }
  std::vector<double> fit(pop.size());
  auto evaluate = [&] {
    for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = sequence_cost(cost, pop[i]);
  };
  auto best_index = [&] {
    return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
  };
  auto record = [&](GaResult& r) {
    const std::size_t b = best_index();
    r.best_history.push_back(fit[b]);
    r.mean_history.push_back(std::accumulate(fit.begin(), fit.end(), 0.0) / fit.size());
  };
  auto tournament = [&]() -> const std::vector<int>& {
    int best = member(rng);
    for (int k = 1; k < params.tournament_size; ++k) {
      const int c = member(rng);
      if (fit[c] < fit[best]) best = c;
    }
    return pop[best];
  };

  GaResult result;
  evaluate();
  record(result);
  for (int g = 0; g < params.max_generations; ++g) {
    std::vector<std::vector<int>> next;
    next.reserve(pop.size());
    next.push_back(pop[best_index()]);
    while (next.size() < pop.size()) {
      const auto& p1 = tournament();
      const auto& p2 = tournament();
      std::vector<int> child = (n > 1 && unit(rng) < params.crossover_prob)
                                   ? detail::order_crossover(p1, p2, rng)
                                   : p1;
      if (n > 1 && unit(rng) < params.mutation_prob) std::swap(child[gene(rng)], child[gene(rng)]);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    evaluate();
    record(result);
  }
  const std::size_t b = best_index();
  result.order = pop[b];
  result.cost = fit[b];
  return result;
}

struct SequenceResult {
  std::vector<SandingTask> tasks;  // in execution order
  GaResult ga;
  CostMatrix matrix;
};

inline SequenceResult ga_optimize_sequence(const std::vector<SandingTask>& tasks,
                                           const GaParams& params, const PlannerContext& ctx,
                                           const Vec4& home) {
  require(!tasks.empty(), ErrorCode::InvalidArgument, "need at least one task");
  SequenceResult out;
  out.matrix = build_cost_matrix(ctx, tasks, home, params);
  out.ga = ga_optimize(out.matrix.cost, params);
  for (int i : out.ga.order) out.tasks.push_back(tasks[i]);
  return out;
}

// --- CSV export -------------------------------------------------------------

inline void write_cost_matrix_csv(const std::string& path, const MatX& cost) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << "from";
  for (int j = 0; j < cost.cols(); ++j) out << ",to_" << j;
  out << '\n';
  char buf[32];
  for (int i = 0; i < cost.rows(); ++i) {
    out << i;
    for (int j = 0; j < cost.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", cost(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline void write_ga_history_csv(const std::string& path, const GaResult& r) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << "generation,best,mean\n";
  char buf[64];
  for (std::size_t g = 0; g < r.best_history.size(); ++g) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", g, r.best_history[g], r.mean_history[g]);
    out << buf;
  }
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << "t,q0,q1,q2,q3,qd0,qd1,qd2,qd3,qdd0,qdd1,qdd2,qdd3\n";
  char buf[32];
  for (const auto& s : traj.samples) {
    std::snprintf(buf, sizeof buf, "%.9g", s.t);
    out << buf;
    for (const Vec4* v : {&s.q, &s.qdot, &s.qddot}) {
      for (int j = 0; j < kJoints; ++j) {
        std::snprintf(buf, sizeof buf, ",%.9g", (*v)(j));
        out << buf;
      }
    }
    out << '\n';
  }
}

}  // namespace sandbot
