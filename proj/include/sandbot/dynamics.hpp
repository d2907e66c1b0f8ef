/**
 * @file dynamics.hpp
 * @brief Planar 4-DOF gantry arm: kinematics, Lagrangian dynamics, belt
 * contact and the fixed-step integrator.
 *
 * Joint order is (x, y, theta1, theta2): two prismatic carriages followed by
 * two revolute links. The task space is (p_x, p_y, phi) with
 *
 *   p_x = x + l1 cos(theta1) + l2 cos(theta1 + theta2)
 *   p_y = y + l1 sin(theta1) + l2 sin(theta1 + theta2)
 *   phi = theta1 + theta2
 *
 * Gravity acts along -y.
 */
#pragma once

#include <array>
#include <cmath>
#include <utility>

#include <Eigen/Eigenvalues>

#include "sandbot/common.hpp"

namespace sandbot {

struct JointLimits {
  Vec4 lower{-1.0, -1.0, -2.0 * M_PI, -2.0 * M_PI};
  Vec4 upper{1.0, 1.0, 2.0 * M_PI, 2.0 * M_PI};

  bool contains(const Vec4& q) const {
    return (q.array() >= lower.array()).all() && (q.array() <= upper.array()).all();
  }
};

struct RobotModel {
  double l1 = 0.3;  // m
  double l2 = 0.2;  // m
  double carriage_x_mass = 2.0;  // kg, moves along x only
  double carriage_y_mass = 2.0;  // kg, rides on the x carriage
  double link1_mass = 1.0;       // kg, uniform rod
  double link2_mass = 0.5;       // kg, uniform rod
  /// Reflected rotor inertia per joint (kg or kg m^2), added to the diagonal of M.
  Vec4 rotor_inertia{0.0, 0.0, 1.0, 1.0};
  double gravity = 9.81;  // m/s^2 along -y
  JointLimits joint_limits{};
  Vec4 velocity_limits{0.5, 0.5, 2.0, 2.0};
  Vec4 acceleration_limits{2.0, 2.0, 5.0, 5.0};

  void validate() const {
    require(l1 > 0 && l2 > 0, ErrorCode::InvalidArgument, "link lengths must be positive");
    require(carriage_x_mass > 0 && carriage_y_mass > 0 && link1_mass > 0 && link2_mass > 0,
            ErrorCode::InvalidArgument, "masses must be positive");
    require((rotor_inertia.array() >= 0).all(), ErrorCode::InvalidArgument,
            "rotor inertia must be non-negative");
    require(gravity >= 0, ErrorCode::InvalidArgument, "gravity magnitude must be non-negative");
    require((joint_limits.lower.array() < joint_limits.upper.array()).all(),
            ErrorCode::InvalidArgument, "joint limits need min < max");
    require((velocity_limits.array() > 0).all() && (acceleration_limits.array() > 0).all(),
            ErrorCode::InvalidArgument, "velocity/acceleration limits must be positive");
  }
};

struct JointState {
  Vec4 q = Vec4::Zero();
  Vec4 qdot = Vec4::Zero();
  double time = 0.0;
};

struct TaskState {
  Vec3 x = Vec3::Zero();
  Vec3 xdot = Vec3::Zero();
};

/// Unilateral spring-damper belt surface. Penetration is measured along
/// `normal` beyond `plane_offset`, both in task coordinates.
struct BeltContact {
  double plane_offset = 0.05;
  double stiffness = 1.0e4;  // N/m
  double damping = 1.0e3;    // N s/m
  Vec3 normal = Vec3::UnitX();
  /// Unsensed tangential abrasion force applied while in contact (N).
  double tangential_force = 2.0;
  Vec3 tangent = -Vec3::UnitY();

  void validate() const {
    require(stiffness > 0, ErrorCode::InvalidArgument, "contact stiffness must be positive");
    require(damping >= 0, ErrorCode::InvalidArgument, "contact damping must be non-negative");
    require(std::abs(normal.norm() - 1.0) < 1e-9, ErrorCode::InvalidArgument,
            "contact normal must be unit length");
  }
};

struct DynamicsTerms {
  Mat4 M = Mat4::Zero();
  Mat4 C = Mat4::Zero();
  Vec4 g = Vec4::Zero();
};

inline Vec3 forward_kinematics(const RobotModel& model, const Vec4& q) {
  const double t12 = q(2) + q(3);
  return {q(0) + model.l1 * std::cos(q(2)) + model.l2 * std::cos(t12),
          q(1) + model.l1 * std::sin(q(2)) + model.l2 * std::sin(t12), t12};
}

inline Mat34 jacobian(const RobotModel& model, const Vec4& q) {
  const double s1 = std::sin(q(2)), c1 = std::cos(q(2));
  const double s12 = std::sin(q(2) + q(3)), c12 = std::cos(q(2) + q(3));
  Mat34 J;
  J << 1, 0, -model.l1 * s1 - model.l2 * s12, -model.l2 * s12,
       0, 1, model.l1 * c1 + model.l2 * c12, model.l2 * c12,
       0, 0, 1, 1;
  return J;
}

inline TaskState task_state(const RobotModel& model, const JointState& state) {
  return {forward_kinematics(model, state.q), jacobian(model, state.q) * state.qdot};
}

/// Damped right pseudo-inverse J^T (J J^T + damping^2 I)^-1. With zero
/// damping the Gram matrix must be well conditioned (cond <= 1e12).
inline Mat43 pseudo_inverse(const Mat34& J, double damping) {
  require(damping >= 0, ErrorCode::InvalidArgument, "damping must be non-negative");
  Mat3 gram = J * J.transpose();
  if (damping == 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0) || hi / lo > 1e12) {
      throw Error(ErrorCode::SingularJacobian, "J J^T is rank deficient");
    }
  } else {
    gram += damping * damping * Mat3::Identity();
  }
  return J.transpose() * gram.ldlt().solve(Mat3::Identity());
}

namespace detail {

// Point on the revolute chain at distance r1 along link 1 and r2 along link 2:
//   p = (x + r1 c1 + r2 c12, y + r1 s1 + r2 s12).
struct PointJacobian {
  Eigen::Matrix<double, 2, 4> Jv;
  std::array<Eigen::Matrix<double, 2, 4>, 4> dJv;  // d(Jv)/dq_k
};

inline PointJacobian chain_point_jacobian(const Vec4& q, double r1, double r2) {
  const double s1 = std::sin(q(2)), c1 = std::cos(q(2));
  const double s12 = std::sin(q(2) + q(3)), c12 = std::cos(q(2) + q(3));
  PointJacobian out;
  out.Jv << 1, 0, -r1 * s1 - r2 * s12, -r2 * s12,
            0, 1, r1 * c1 + r2 * c12, r2 * c12;
  for (auto& d : out.dJv) d.setZero();
  out.dJv[2] << 0, 0, -r1 * c1 - r2 * c12, -r2 * c12,
                0, 0, -r1 * s1 - r2 * s12, -r2 * s12;
  out.dJv[3] << 0, 0, -r2 * c12, -r2 * c12,
                0, 0, -r2 * s12, -r2 * s12;
  return out;
}

struct InertiaAndDerivatives {
  Mat4 M;
  std::array<Mat4, 4> dM;  // dM/dq_k
  Vec4 g;
};

inline InertiaAndDerivatives inertia_terms(const RobotModel& model, const Vec4& q) {
  InertiaAndDerivatives out;
  out.M = model.rotor_inertia.asDiagonal();
  for (auto& d : out.dM) d.setZero();
  out.g.setZero();

  // Carriages: x carriage moves along x only; y carriage along x and y.
  out.M(0, 0) += model.carriage_x_mass + model.carriage_y_mass;
  out.M(1, 1) += model.carriage_y_mass;
  out.g(1) += model.gravity * model.carriage_y_mass;

  struct Link {
    double mass, inertia, r1, r2;
    Vec4 omega_row;
  };
  const std::array<Link, 2> links{{
      {model.link1_mass, model.link1_mass * model.l1 * model.l1 / 12.0, 0.5 * model.l1, 0.0,
       Vec4(0, 0, 1, 0)},
      {model.link2_mass, model.link2_mass * model.l2 * model.l2 / 12.0, model.l1, 0.5 * model.l2,
       Vec4(0, 0, 1, 1)},
  }};
  for (const auto& link : links) {
    const PointJacobian pj = chain_point_jacobian(q, link.r1, link.r2);
    out.M += link.mass * pj.Jv.transpose() * pj.Jv +
             link.inertia * link.omega_row * link.omega_row.transpose();
    for (int k = 0; k < 4; ++k) {
      const Mat4 half = pj.dJv[k].transpose() * pj.Jv;
      out.dM[k] += link.mass * (half + half.transpose());
    }
    // Potential m * gravity * y_com, so g = m * gravity * d(y_com)/dq.
    out.g += model.gravity * link.mass * pj.Jv.row(1).transpose();
  }
  return out;
}

}  // namespace detail

/// Inertia, Coriolis (Christoffel form, so that dM/dt - 2C is skew) and gravity.
inline DynamicsTerms dynamics_terms(const RobotModel& model, const Vec4& q, const Vec4& qdot) {
  const auto it = detail::inertia_terms(model, q);
  DynamicsTerms out;
  out.M = it.M;
  out.g = it.g;
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 4; ++j) {
      double c = 0.0;
      for (int i = 0; i < 4; ++i) {
        c += 0.5 * (it.dM[i](k, j) + it.dM[j](k, i) - it.dM[k](i, j)) * qdot(i);
      }
      out.C(k, j) = c;
    }
  }
  return out;
}

inline double potential_energy(const RobotModel& model, const Vec4& q) {
  const double s1 = std::sin(q(2)), s12 = std::sin(q(2) + q(3));
  const double y_link1 = q(1) + 0.5 * model.l1 * s1;
  const double y_link2 = q(1) + model.l1 * s1 + 0.5 * model.l2 * s12;
  return model.gravity *
         (model.carriage_y_mass * q(1) + model.link1_mass * y_link1 + model.link2_mass * y_link2);
}

inline double mechanical_energy(const RobotModel& model, const JointState& s) {
  const auto it = detail::inertia_terms(model, s.q);
  return 0.5 * s.qdot.dot(it.M * s.qdot) + potential_energy(model, s.q);
}

/// Contact force on the end effector; zero unless the surface is penetrated.
inline Vec3 contact_force(const BeltContact& contact, const TaskState& x) {
  const double depth = x.x.dot(contact.normal) - contact.plane_offset;
  if (depth <= 0.0) return Vec3::Zero();
  const double rate = std::max(x.xdot.dot(contact.normal), 0.0);
  return -(contact.stiffness * depth + contact.damping * rate) * contact.normal;
}

inline bool in_contact(const BeltContact& contact, const Vec3& x) {
  return x.dot(contact.normal) - contact.plane_offset > 0.0;
}

/// Physical task-space force on the end effector: sensed contact force plus
/// the unsensed tangential abrasion while the belt is engaged.
inline Vec3 belt_force(const BeltContact& contact, const TaskState& x) {
  Vec3 f = contact_force(contact, x);
  if (in_contact(contact, x.x)) f += contact.tangential_force * contact.tangent;
  return f;
}

inline constexpr double kMaxStep = 1e-2;
inline constexpr double kDivergenceSpeed = 1e3;

/**
 * Advances M q'' + C q' + g = u + J^T f_e + disturbance by one step of the
 * drift-kick-drift (Stoermer-Verlet) scheme. Forces are evaluated at the
 * half-step configuration with the start-of-step velocity.
 */
inline JointState step(const RobotModel& model, const JointState& state, const Vec4& u,
                       const BeltContact& contact, double dt,
                       const Vec4& disturbance = Vec4::Zero()) {
  require(dt > 0.0 && dt <= kMaxStep, ErrorCode::InvalidArgument, "dt must lie in (0, 1e-2]");
  const Vec4 q_half = state.q + 0.5 * dt * state.qdot;
  const Mat34 J = jacobian(model, q_half);
  const TaskState x{forward_kinematics(model, q_half), J * state.qdot};
  const Vec4 tau_e = J.transpose() * belt_force(contact, x);
  const DynamicsTerms dyn = dynamics_terms(model, q_half, state.qdot);
  const Vec4 rhs = u + tau_e + disturbance - dyn.C * state.qdot - dyn.g;
  const Vec4 qddot = dyn.M.llt().solve(rhs);

  JointState next;
  next.qdot = state.qdot + dt * qddot;
  next.q = q_half + 0.5 * dt * next.qdot;
  next.time = state.time + dt;
  if (!next.q.allFinite() || !next.qdot.allFinite() || next.qdot.norm() > kDivergenceSpeed) {
    throw Error(ErrorCode::IntegrationDiverged,
                "joint speed exceeded bound at t=" + std::to_string(next.time));
  }
  if (!model.joint_limits.contains(next.q)) {
    throw Error(ErrorCode::JointLimitViolation,
                "joint limits exceeded at t=" + std::to_string(next.time));
  }
  return next;
}

/// Closed-form inverse kinematics for a chosen elbow angle theta2.
inline Vec4 inverse_kinematics(const RobotModel& model, const Vec3& x, double theta2) {
  const double theta1 = x(2) - theta2;
  return {x(0) - model.l1 * std::cos(theta1) - model.l2 * std::cos(x(2)),
          x(1) - model.l1 * std::sin(theta1) - model.l2 * std::sin(x(2)), theta1, theta2};
}

}  // namespace sandbot
