#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sandbot/impedance.hpp"

using namespace sandbot;

TEST(LambdaGamma, ReferenceGains) {
  const auto [L, G] = derive_lambda_gamma(Vec3::Ones(), Vec3::Constant(12.5), Vec3::Constant(11.5));
  EXPECT_TRUE(L.isApprox(Vec3::Constant(11.5), 1e-14));
  EXPECT_TRUE(G.isApprox(Vec3::Ones(), 1e-14));
}

TEST(LambdaGamma, CriticallyDamped) {
  const auto [L, G] = derive_lambda_gamma(Vec3::Ones(), Vec3::Constant(2), Vec3::Ones());
  EXPECT_TRUE(L.isApprox(Vec3::Ones(), 1e-12));
  EXPECT_TRUE(G.isApprox(Vec3::Ones(), 1e-12));
}

TEST(LambdaGamma, QuadraticRoots) {
  const auto [L, G] = derive_lambda_gamma(Vec3::Ones(), Vec3::Constant(3), Vec3::Constant(2));
  EXPECT_TRUE(L.isApprox(Vec3::Constant(2), 1e-14));
  EXPECT_TRUE(G.isApprox(Vec3::Ones(), 1e-14));
}

TEST(LambdaGamma, UnderDampedRejected) {
  try {
    derive_lambda_gamma(Vec3::Ones(), Vec3::Constant(1), Vec3::Constant(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ComplexRoots);
  }
}

TEST(LambdaGamma, NonPositiveRejected) {
  EXPECT_THROW(derive_lambda_gamma(Vec3(1, 0, 1), Vec3::Constant(3), Vec3::Constant(2)), Error);
}

TEST(LambdaGamma, FactorizationIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 10);
  for (int i = 0; i < 500; ++i) {
    Vec3 Md, Cd, Kd;
    for (int k = 0; k < 3; ++k) {
      Md(k) = u(rng);
      Kd(k) = u(rng);
      // Damping at or above critical keeps the roots real.
      Cd(k) = 2.0 * std::sqrt(Kd(k) * Md(k)) * (1.0 + u(rng));
    }
    const auto [L, G] = derive_lambda_gamma(Md, Cd, Kd);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(L(k), G(k));
      EXPECT_NEAR(L(k) + G(k), Cd(k) / Md(k), 1e-12 * Cd(k) / Md(k));
      EXPECT_NEAR(L(k) * G(k), Kd(k) / Md(k), 1e-12 * Kd(k) / Md(k));
    }
  }
}

TEST(ForceFilter, RestStaysAtRest) {
  const ImpedanceSpec spec;
  ForceFilterState s;
  for (int k = 0; k < 1000; ++k) s = filter_force_step(s, Vec3::Zero(), spec, 1e-3);
  EXPECT_EQ(s.delta_f_l, Vec3::Zero());
}

TEST(ForceFilter, DcGain) {
  const ImpedanceSpec spec = make_impedance_spec(Vec3::Ones(), Vec3::Constant(2), Vec3::Ones());
  ForceFilterState s;
  for (int k = 0; k < 40000; ++k) s = filter_force_step(s, Vec3(2, 0, 0), spec, 1e-3);
  EXPECT_NEAR(s.delta_f_l(0), 2.0, 1e-12);
  EXPECT_EQ(s.delta_f_l(1), 0.0);
}

TEST(ForceFilter, FirstOrderStep) {
  const ImpedanceSpec spec = make_impedance_spec(Vec3::Ones(), Vec3::Constant(2), Vec3::Ones());
  const auto s = filter_force_step({}, Vec3(1, 0, 0), spec, 0.1);
  EXPECT_NEAR(s.delta_f_l(0), 1.0 - std::exp(-0.1), 1e-15);
  EXPECT_NEAR(s.delta_f_l(0), 0.09516, 1e-5);
}

TEST(ForceFilter, ExactForAnyStepSize) {
  const ImpedanceSpec spec;
  const Vec3 df(3, -1, 0.5);
  ForceFilterState fine, coarse;
  for (int k = 0; k < 1000; ++k) fine = filter_force_step(fine, df, spec, 1e-3);
  for (int k = 0; k < 10; ++k) coarse = filter_force_step(coarse, df, spec, 0.1);
  for (int i = 0; i < 3; ++i) {
    const double exact = df(i) / spec.Md(i) / spec.Gamma(i) * (1.0 - std::exp(-spec.Gamma(i)));
    EXPECT_NEAR(fine.delta_f_l(i), exact, 1e-12);
    EXPECT_NEAR(coarse.delta_f_l(i), exact, 1e-12);
  }
}

TEST(ForceFilter, BoundedForBoundedInput) {
  const ImpedanceSpec spec;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5);
  ForceFilterState s;
  s.delta_f_l = Vec3(1, -2, 0.5);
  const double init = s.delta_f_l.norm();
  const double gain = (spec.Gamma.cwiseProduct(spec.Md)).cwiseInverse().maxCoeff();
  double sup = 0.0;
  for (int k = 0; k < 5000; ++k) {
    const Vec3 df(u(rng), u(rng), u(rng));
    sup = std::max(sup, df.norm());
    s = filter_force_step(s, df, spec, 1e-3);
    EXPECT_LE(s.delta_f_l.norm(), init + gain * sup + 1e-12);
  }
}

TEST(ImpedanceVector, Zero) {
  const ImpedanceSpec spec;
  EXPECT_EQ(impedance_vector_task(Vec3::Zero(), Vec3::Zero(), spec, {}), Vec3::Zero());
}

TEST(ImpedanceVector, SingleTerm) {
  const ImpedanceSpec spec;
  const Vec3 z = impedance_vector_task(Vec3(0.001, 0, 0), Vec3::Zero(), spec, {});
  EXPECT_NEAR(z(0), 0.0115, 1e-15);
  EXPECT_EQ(z(1), 0.0);
}

// With dx, df smooth and the filter integrated alongside, zdot + Gamma z
// reproduces the left side of the impedance model.
TEST(ImpedanceVector, FilteredIdentity) {
  const ImpedanceSpec spec;
  const double dt = 1e-4;
  auto dx = [](double t) { return Vec3(0.01 * std::sin(3 * t), 0.02 * std::cos(2 * t), 0.005 * t * t); };
  auto dxd = [](double t) { return Vec3(0.03 * std::cos(3 * t), -0.04 * std::sin(2 * t), 0.01 * t); };
  auto dxdd = [](double t) { return Vec3(-0.09 * std::sin(3 * t), -0.08 * std::cos(2 * t), 0.01); };
  auto df = [](double t) { return Vec3(2 * std::sin(t), std::cos(5 * t), 0.3); };

  // Filter driven with the midpoint force is second-order accurate.
  std::vector<Vec3> z;
  ForceFilterState s;
  std::vector<ForceFilterState> states;
  const int n = 20000;
  for (int k = 0; k <= n; ++k) {
    states.push_back(s);
    s = filter_force_step(s, df((k + 0.5) * dt), spec, dt);
  }
  for (int k = 0; k <= n; ++k) z.push_back(impedance_vector_task(dx(k * dt), dxd(k * dt), spec, states[k]));
  double worst = 0.0;
  for (int k = 1; k < n; ++k) {
    const double t = k * dt;
    const Vec3 zdot = (z[k + 1] - z[k - 1]) / (2 * dt);
    const Vec3 lhs = impedance_model_residual(dx(t), dxd(t), dxdd(t), df(t), spec);
    worst = std::max(worst, (lhs - (zdot + spec.Gamma.cwiseProduct(z[k]))).norm());
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(ReferenceTrajectory, SinusoidIsConsistent) {
  const auto ref = ReferenceTrajectory::sinusoid(Vec3(0.05, 0, 0), Vec3(0.01, 0.02, 0.1), 2.0,
                                                 Vec3(-25, 0, 0));
  EXPECT_LT(reference_consistency_error(ref, 0.0, 5.0, 1e-3), 1e-6);
}

TEST(ReferenceTrajectory, ConstantIsConsistent) {
  const auto ref = ReferenceTrajectory::constant(Vec3(0.05, 0, 0), Vec3(-25, 0, 0));
  EXPECT_EQ(reference_consistency_error(ref, 0.0, 1.0, 1e-3), 0.0);
  EXPECT_EQ(ref.f_d(3.0), Vec3(-25, 0, 0));
}
