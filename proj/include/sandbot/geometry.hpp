/**
 * @file geometry.hpp
 * @brief Rigid transforms and convex polyhedra shared by perception and
 * planning.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Geometry>

#include "sandbot/common.hpp"

namespace sandbot {

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Vec3& axis, double angle,
                                        const Vec3& translation = Vec3::Zero()) {
    return {Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), translation};
  }

  /// Rotation by `angle` about `axis` through `pivot`.
  static RigidTransform rotation_about(const Vec3& pivot, const Vec3& axis, double angle) {
    const Mat3 R = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    return {R, pivot - R * pivot};
  }

  /// Planar end-effector pose (p_x, p_y, phi) lifted to 3-D.
  static RigidTransform planar(const Vec3& x) {
    return from_axis_angle(Vec3::UnitZ(), x(2), Vec3(x(0), x(1), 0.0));
  }

  Vec3 apply(const Vec3& p) const { return R * p + T; }

  /// this * other: apply `other` first.
  RigidTransform operator*(const RigidTransform& other) const {
    return {R * other.R, R * other.T + T};
  }

  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * T)}; }

  bool is_valid(double tol = 1e-9) const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol && T.allFinite();
  }

  /// Rotation angle of R in radians.
  double angle() const {
    return std::acos(std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0));
  }
};

inline double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.inverse() * b).angle();
}

inline double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.T - b.T).norm();
}

/// Closed convex polyhedron. Faces are vertex index loops, counter-clockwise
/// seen from outside.
struct ConvexMesh {
  std::vector<Vec3> vertices;
  std::vector<std::vector<int>> faces;

  Vec3 face_normal(std::size_t f) const {
    const auto& idx = faces.at(f);
    Vec3 n = Vec3::Zero();
    // Newell's method.
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Vec3& a = vertices[idx[i]];
      const Vec3& b = vertices[idx[(i + 1) % idx.size()]];
      n += a.cross(b);
    }
    return n.normalized();
  }

  Vec3 face_centroid(std::size_t f) const {
    Vec3 c = Vec3::Zero();
    for (int i : faces.at(f)) c += vertices[i];
    return c / static_cast<double>(faces[f].size());
  }

  double face_area(std::size_t f) const {
    const auto& idx = faces.at(f);
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      n += vertices[idx[i]].cross(vertices[idx[(i + 1) % idx.size()]]);
    }
    return 0.5 * n.norm();
  }

  /// Signed distance from the origin of the object frame to the face plane.
  double face_offset(std::size_t f) const {
    return face_normal(f).dot(vertices[faces.at(f).front()]);
  }

  ConvexMesh transformed(const RigidTransform& pose) const {
    ConvexMesh out = *this;
    for (auto& v : out.vertices) v = pose.apply(v);
    return out;
  }

  double bounding_radius() const {
    double r = 0.0;
    for (const auto& v : vertices) r = std::max(r, v.norm());
    return r;
  }
};

/// Axis-aligned box [-hx, hx] x [-hy, hy] x [-hz, hz] around `center`.
inline ConvexMesh make_box(const Vec3& half_extents, const Vec3& center = Vec3::Zero()) {
  ConvexMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(center(0) + ((i & 1) ? half_extents(0) : -half_extents(0)),
                            center(1) + ((i & 2) ? half_extents(1) : -half_extents(1)),
                            center(2) + ((i & 4) ? half_extents(2) : -half_extents(2)));
  }
  m.faces = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  return m;
}

inline ConvexMesh make_unit_cube() { return make_box(Vec3::Constant(0.5)); }

/**
 * Right prism along z over a convex polygon given counter-clockwise in the
 * xy-plane. Faces: one per polygon edge, then the top (+z) and bottom (-z).
 */
inline ConvexMesh make_prism(const std::vector<Vec2>& polygon, double half_height) {
  ConvexMesh m;
  const int n = static_cast<int>(polygon.size());
  require(n >= 3, ErrorCode::InvalidArgument, "prism needs at least three polygon vertices");
  for (const auto& p : polygon) m.vertices.emplace_back(p(0), p(1), -half_height);
  for (const auto& p : polygon) m.vertices.emplace_back(p(0), p(1), half_height);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j, n + j, n + i});
  }
  std::vector<int> top, bottom;
  for (int i = 0; i < n; ++i) top.push_back(n + i);
  for (int i = n - 1; i >= 0; --i) bottom.push_back(i);
  m.faces.push_back(top);
  m.faces.push_back(bottom);
  return m;
}

/**
 * Rectangle of half-size (hx, hy) whose corners are rounded by an arc of
 * `radius`, each corner approximated by `corner_facets[k]` chords. The
 * polygon has 4 + sum(corner_facets) edges.
 */
inline std::vector<Vec2> rounded_rectangle(double hx, double hy, double radius,
                                           const std::vector<int>& corner_facets) {
  require(corner_facets.size() == 4, ErrorCode::InvalidArgument, "need four corner facet counts");
  require(radius > 0 && radius < std::min(hx, hy), ErrorCode::InvalidArgument,
          "corner radius must be smaller than the half extents");
  std::vector<Vec2> poly;
  const std::array<Vec2, 4> centers{Vec2(hx - radius, -hy + radius), Vec2(hx - radius, hy - radius),
                                    Vec2(-hx + radius, hy - radius),
                                    Vec2(-hx + radius, -hy + radius)};
  for (int c = 0; c < 4; ++c) {
    const int facets = corner_facets[c];
    require(facets >= 1, ErrorCode::InvalidArgument, "each corner needs at least one facet");
    const double start = -M_PI / 2.0 + c * M_PI / 2.0;
    for (int k = 0; k <= facets; ++k) {
      const double a = start + (M_PI / 2.0) * k / facets;
      poly.emplace_back(centers[c](0) + radius * std::cos(a), centers[c](1) + radius * std::sin(a));
    }
  }
  return poly;
}

/// Euclidean distance from p to a planar convex polygon (3-D vertices).
inline double point_polygon_distance(const Vec3& p, const std::vector<Vec3>& poly) {
  const std::size_t n = poly.size();
  Vec3 normal = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) normal += poly[i].cross(poly[(i + 1) % n]);
  normal.normalize();
  const double h = normal.dot(p - poly[0]);
  const Vec3 proj = p - h * normal;
  bool inside = true;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 e = poly[(i + 1) % n] - poly[i];
    if (normal.dot(e.cross(proj - poly[i])) < 0) {
      inside = false;
      break;
    }
  }
  if (inside) return std::abs(h);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& a = poly[i];
    const Vec3 e = poly[(i + 1) % n] - a;
    const double t = std::clamp(e.dot(p - a) / e.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (a + t * e - p).norm());
  }
  return best;
}

/// Distance from p to the surface of the mesh.
inline double point_mesh_distance(const Vec3& p, const ConvexMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Vec3> poly;
  for (const auto& face : mesh.faces) {
    poly.clear();
    for (int i : face) poly.push_back(mesh.vertices[i]);
    best = std::min(best, point_polygon_distance(p, poly));
  }
  return best;
}

}  // namespace sandbot
