#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "sandbot/dynamics.hpp"

using namespace sandbot;

namespace {

Vec4 random_q(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lin(-0.8, 0.8), ang(-M_PI, M_PI);
  return {lin(rng), lin(rng), ang(rng), ang(rng)};
}

Vec4 random_qdot(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return {u(rng), u(rng), u(rng), u(rng)};
}

// Planar chain built from 4x4 homogeneous transforms.
Vec3 fk_homogeneous(const RobotModel& m, const Vec4& q) {
  auto trans = [](double x, double y) {
    Mat4 T = Mat4::Identity();
    T(0, 3) = x;
    T(1, 3) = y;
    return T;
  };
  auto rotz = [](double a) {
    Mat4 T = Mat4::Identity();
    T(0, 0) = std::cos(a);
    T(0, 1) = -std::sin(a);
    T(1, 0) = std::sin(a);
    T(1, 1) = std::cos(a);
    return T;
  };
  const Mat4 T = trans(q(0), 0) * trans(0, q(1)) * rotz(q(2)) * trans(m.l1, 0) * rotz(q(3)) *
                 trans(m.l2, 0);
  return {T(0, 3), T(1, 3), std::atan2(T(1, 0), T(0, 0))};
}

double wrap(double a) { return std::remainder(a, 2.0 * M_PI); }

// Height of the centre of mass of everything carried by the y carriage.
double hanging_com_y(const RobotModel& m, const Vec4& q) {
  const double y1 = q(1) + 0.5 * m.l1 * std::sin(q(2));
  const double y2 = q(1) + m.l1 * std::sin(q(2)) + 0.5 * m.l2 * std::sin(q(2) + q(3));
  return (m.carriage_y_mass * q(1) + m.link1_mass * y1 + m.link2_mass * y2) /
         (m.carriage_y_mass + m.link1_mass + m.link2_mass);
}

BeltContact far_belt() {
  BeltContact c;
  c.plane_offset = 100.0;
  return c;
}

}  // namespace

TEST(ForwardKinematics, ZeroAngles) {
  const RobotModel m;
  EXPECT_TRUE(forward_kinematics(m, Vec4::Zero()).isApprox(Vec3(0.5, 0, 0)));
}

TEST(ForwardKinematics, RightAngle) {
  const RobotModel m;
  const Vec3 x = forward_kinematics(m, Vec4(0.1, 0.2, M_PI / 2, 0));
  EXPECT_NEAR(x(0), 0.1, 1e-12);
  EXPECT_NEAR(x(1), 0.7, 1e-12);
  EXPECT_NEAR(x(2), M_PI / 2, 1e-12);
}

TEST(ForwardKinematics, MatchesHomogeneousChain) {
  const RobotModel m;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const Vec4 q = random_q(rng);
    const Vec3 a = forward_kinematics(m, q), b = fk_homogeneous(m, q);
    EXPECT_NEAR(a(0), b(0), 1e-12);
    EXPECT_NEAR(a(1), b(1), 1e-12);
    EXPECT_NEAR(wrap(a(2) - b(2)), 0.0, 1e-12);
  }
}

TEST(Jacobian, PrismaticColumns) {
  const RobotModel m;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Mat34 J = jacobian(m, random_q(rng));
    EXPECT_EQ(J.col(0), Vec3(1, 0, 0));
    EXPECT_EQ(J.col(1), Vec3(0, 1, 0));
  }
}

TEST(Jacobian, ZeroAngleRevoluteColumn) {
  const RobotModel m;
  EXPECT_TRUE(jacobian(m, Vec4::Zero()).col(2).isApprox(Vec3(0, 0.5, 1)));
}

TEST(Jacobian, MatchesCentralDifferences) {
  const RobotModel m;
  std::mt19937_64 rng(3);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const Vec4 q = random_q(rng);
    const Mat34 J = jacobian(m, q);
    for (int k = 0; k < 4; ++k) {
      Vec4 dq = Vec4::Zero();
      dq(k) = h;
      const Vec3 fd = (forward_kinematics(m, q + dq) - forward_kinematics(m, q - dq)) / (2 * h);
      for (int r = 0; r < 3; ++r) EXPECT_NEAR(J(r, k), fd(r), 1e-6);
    }
  }
}

TEST(PseudoInverse, OrthonormalRows) {
  Mat34 J = Mat34::Zero();
  J.leftCols<3>() = Mat3::Identity();
  Mat43 expected = Mat43::Zero();
  expected.topRows<3>() = Mat3::Identity();
  EXPECT_TRUE(pseudo_inverse(J, 0.0).isApprox(expected, 1e-14));
}

TEST(PseudoInverse, PenroseConditions) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 200; ++i) {
    Mat34 J;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) J(r, c) = g(rng);
    const Mat43 P = pseudo_inverse(J, 0.0);
    EXPECT_LT((J * P * J - J).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((P * J * P - P).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((J * P - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-10);
    // Moore-Penrose via SVD as an independent route.
    Eigen::JacobiSVD<MatX> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
    MatX Sinv = MatX::Zero(4, 3);
    for (int k = 0; k < 3; ++k) Sinv(k, k) = 1.0 / svd.singularValues()(k);
    const MatX ref = svd.matrixV() * Sinv * svd.matrixU().transpose();
    EXPECT_LT((MatX(P) - ref).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PseudoInverse, RankDeficientThrows) {
  Mat34 J = Mat34::Zero();
  J(0, 0) = 1;
  J(1, 1) = 1;
  try {
    pseudo_inverse(J, 0.0);
    FAIL() << "expected SingularJacobian";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularJacobian);
  }
  EXPECT_NO_THROW(pseudo_inverse(J, 1e-3));
}

TEST(DynamicsTerms, InertiaSymmetricPositiveDefinite) {
  const RobotModel m;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto d = dynamics_terms(m, random_q(rng), random_qdot(rng));
    EXPECT_EQ((d.M - d.M.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat4>(d.M).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(DynamicsTerms, SkewSymmetryOfMdotMinus2C) {
  const RobotModel m;
  std::mt19937_64 rng(6);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const Vec4 q = random_q(rng), qd = random_qdot(rng);
    const Mat4 Mdot =
        (dynamics_terms(m, q + h * qd, qd).M - dynamics_terms(m, q - h * qd, qd).M) / (2 * h);
    const Mat4 N = Mdot - 2.0 * dynamics_terms(m, q, qd).C;
    EXPECT_LT((N + N.transpose()).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(DynamicsTerms, GravityIsPotentialGradient) {
  const RobotModel m;
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec4 q = random_q(rng);
    const Vec4 g = dynamics_terms(m, q, Vec4::Zero()).g;
    for (int k = 0; k < 4; ++k) {
      Vec4 dq = Vec4::Zero();
      dq(k) = h;
      EXPECT_NEAR(g(k), (potential_energy(m, q + dq) - potential_energy(m, q - dq)) / (2 * h), 1e-6);
    }
  }
}

TEST(DynamicsTerms, StaticsHaveNoCoriolis) {
  const RobotModel m;
  std::mt19937_64 rng(8);
  const Vec4 q = random_q(rng);
  EXPECT_EQ(dynamics_terms(m, q, Vec4::Zero()).C * Vec4::Zero(), Vec4::Zero());
  EXPECT_EQ(dynamics_terms(m, q, Vec4::Zero()).C.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ContactForce, SeparationGivesZero) {
  BeltContact c;
  EXPECT_EQ(contact_force(c, {Vec3(c.plane_offset - 0.01, 0, 0), Vec3(1, 0, 0)}), Vec3::Zero());
}

TEST(ContactForce, SpringLaw) {
  BeltContact c;
  c.stiffness = 1e4;
  c.damping = 0;
  c.plane_offset = 0.05;
  const Vec3 f = contact_force(c, {Vec3(0.0525, 0, 0), Vec3::Zero()});
  EXPECT_NEAR(f(0), -25.0, 1e-9);
  EXPECT_EQ(f(1), 0.0);
  EXPECT_EQ(f(2), 0.0);
}

TEST(ContactForce, ContinuousAtFirstTouch) {
  BeltContact c;
  double prev = std::numeric_limits<double>::infinity();
  for (double d = 1e-3; d > 1e-12; d *= 0.1) {
    const double f = contact_force(c, {Vec3(c.plane_offset + d, 0, 0), Vec3::Zero()}).norm();
    EXPECT_LT(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-7);
}

TEST(ContactForce, DampingOnlyWhilePenetrating) {
  BeltContact c;
  const double d = 1e-3;
  const Vec3 in = contact_force(c, {Vec3(c.plane_offset + d, 0, 0), Vec3(0.1, 0, 0)});
  const Vec3 out = contact_force(c, {Vec3(c.plane_offset + d, 0, 0), Vec3(-0.1, 0, 0)});
  EXPECT_NEAR(in(0), -(c.stiffness * d + c.damping * 0.1), 1e-9);
  EXPECT_NEAR(out(0), -c.stiffness * d, 1e-9);
}

TEST(Step, GravityCompensationHoldsStill) {
  const RobotModel m;
  JointState s{Vec4(0.1, -0.2, 0.4, 1.1), Vec4::Zero(), 0.0};
  for (int k = 0; k < 100; ++k) {
    const Vec4 u = dynamics_terms(m, s.q, Vec4::Zero()).g;
    const JointState n = step(m, s, u, far_belt(), 1e-4);
    EXPECT_LT((n.q - s.q).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(n.qdot.cwiseAbs().maxCoeff(), 1e-9);
    s = n;
  }
}

TEST(Step, HangingMassFallsFreely) {
  RobotModel m;
  m.joint_limits.lower(1) = -20;
  m.joint_limits.upper(1) = 20;
  JointState s{Vec4(0, 0, 0.3, 0.5), Vec4::Zero(), 0.0};
  const double y0 = hanging_com_y(m, s.q);
  for (int k = 0; k < 10000; ++k) s = step(m, s, Vec4::Zero(), far_belt(), 1e-4);
  EXPECT_NEAR(hanging_com_y(m, s.q) - y0, -0.5 * m.gravity * 1.0, 1e-4);
}

TEST(Step, EnergyDriftIsSmall) {
  RobotModel m;
  m.gravity = 0.0;
  JointState s{Vec4(0, 0, 0.2, 0.7), Vec4(0.02, -0.01, 0.3, -0.2), 0.0};
  const double e0 = mechanical_energy(m, s);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    s = step(m, s, Vec4::Zero(), far_belt(), 1e-4);
    if (k % 100 == 0) worst = std::max(worst, std::abs(mechanical_energy(m, s) - e0) / e0);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Step, RejectsBadTimeStep) {
  const RobotModel m;
  const JointState s;
  EXPECT_THROW(step(m, s, Vec4::Zero(), far_belt(), 0.0), Error);
  EXPECT_THROW(step(m, s, Vec4::Zero(), far_belt(), 0.02), Error);
}

TEST(Step, JointLimitIsReported) {
  const RobotModel m;
  JointState s{Vec4(0.999, 0, 0, 0), Vec4(1, 0, 0, 0), 0.0};
  try {
    for (int k = 0; k < 1000; ++k) s = step(m, s, Vec4::Zero(), far_belt(), 1e-4);
    FAIL() << "limit not reported";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JointLimitViolation);
  }
}

TEST(Step, DivergenceIsReported) {
  const RobotModel m;
  const JointState s{Vec4::Zero(), Vec4::Zero(), 0.0};
  try {
    step(m, s, Vec4(0, 0, 1e9, 0), far_belt(), 1e-4);
    FAIL() << "divergence not reported";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IntegrationDiverged);
  }
}

TEST(InverseKinematics, RoundTrip) {
  const RobotModel m;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Vec4 q = random_q(rng);
    const Vec4 back = inverse_kinematics(m, forward_kinematics(m, q), q(3));
    EXPECT_LT((forward_kinematics(m, back) - forward_kinematics(m, q)).norm(), 1e-12);
    EXPECT_NEAR(back(3), q(3), 1e-15);
  }
}
