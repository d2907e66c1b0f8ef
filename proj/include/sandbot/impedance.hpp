/**
 * @file impedance.hpp
 * @brief Desired task-space impedance model, its (Lambda, Gamma)
 * factorization, the filtered force error and the impedance vector z.
 */
#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "sandbot/common.hpp"

namespace sandbot {

/// Diagonal desired impedance M_d, C_d, K_d together with the derived
/// Lambda and Gamma (stored as diagonals).
struct ImpedanceSpec {
  Vec3 Md = Vec3::Ones();
  Vec3 Cd = Vec3::Constant(12.5);
  Vec3 Kd = Vec3::Constant(11.5);
  Vec3 Lambda = Vec3::Constant(11.5);
  Vec3 Gamma = Vec3::Ones();
};

/**
 * Per axis, Lambda and Gamma are the real roots of
 * s^2 - (C_d/M_d) s + K_d/M_d = 0 with Lambda >= Gamma.
 * Throws ComplexRoots when an axis is under-damped.
 */
inline std::pair<Vec3, Vec3> derive_lambda_gamma(const Vec3& Md, const Vec3& Cd, const Vec3& Kd) {
  require((Md.array() > 0).all() && (Cd.array() > 0).all() && (Kd.array() > 0).all(),
          ErrorCode::InvalidArgument, "impedance diagonals must be strictly positive");
  Vec3 lambda, gamma;
  for (int i = 0; i < 3; ++i) {
    const double sum = Cd(i) / Md(i);
    const double product = Kd(i) / Md(i);
    double disc = sum * sum - 4.0 * product;
    if (disc < 0.0) {
      // Round-off on a critically damped axis is not an under-damped spec.
      if (disc > -1e-12 * sum * sum) {
        disc = 0.0;
      } else {
        throw Error(ErrorCode::ComplexRoots,
                    "axis " + std::to_string(i) + " has negative discriminant");
      }
    }
    lambda(i) = 0.5 * (sum + std::sqrt(disc));
    gamma(i) = product / lambda(i);
  }
  return {lambda, gamma};
}

inline ImpedanceSpec make_impedance_spec(const Vec3& Md, const Vec3& Cd, const Vec3& Kd) {
  auto [lambda, gamma] = derive_lambda_gamma(Md, Cd, Kd);
  return {Md, Cd, Kd, lambda, gamma};
}

struct ForceFilterState {
  Vec3 delta_f_l = Vec3::Zero();
};

/// Exact zero-order-hold step of  d/dt f_l + Gamma f_l = M_d^-1 delta_f.
inline ForceFilterState filter_force_step(const ForceFilterState& state, const Vec3& delta_f,
                                          const ImpedanceSpec& spec, double dt) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
  ForceFilterState next;
  for (int i = 0; i < 3; ++i) {
    const double decay = std::exp(-spec.Gamma(i) * dt);
    next.delta_f_l(i) =
        decay * state.delta_f_l(i) + (1.0 - decay) / spec.Gamma(i) * delta_f(i) / spec.Md(i);
  }
  return next;
}

/// z = d(dx)/dt + Lambda dx - delta_f_l
inline Vec3 impedance_vector_task(const Vec3& dx, const Vec3& dxdot, const ImpedanceSpec& spec,
                                  const ForceFilterState& state) {
  return dxdot + spec.Lambda.cwiseProduct(dx) - state.delta_f_l;
}

/// Left-hand side of the normalized impedance model,
/// dx'' + M_d^-1 C_d dx' + M_d^-1 K_d dx - M_d^-1 delta_f.
inline Vec3 impedance_model_residual(const Vec3& dx, const Vec3& dxdot, const Vec3& dxddot,
                                     const Vec3& delta_f, const ImpedanceSpec& spec) {
  return dxddot + spec.Cd.cwiseQuotient(spec.Md).cwiseProduct(dxdot) +
         spec.Kd.cwiseQuotient(spec.Md).cwiseProduct(dx) - delta_f.cwiseQuotient(spec.Md);
}

/// Desired motion and force as functions of time.
struct ReferenceTrajectory {
  std::function<Vec3(double)> x_d;
  std::function<Vec3(double)> xdot_d;
  std::function<Vec3(double)> xddot_d;
  std::function<Vec3(double)> f_d;

  static ReferenceTrajectory constant(const Vec3& x, const Vec3& f) {
    return {[x](double) { return x; }, [](double) { return Vec3::Zero(); },
            [](double) { return Vec3::Zero(); }, [f](double) { return f; }};
  }

  /// x_d(t) = center + amplitude * sin(omega t), elementwise.
  static ReferenceTrajectory sinusoid(const Vec3& center, const Vec3& amplitude, double omega,
                                      const Vec3& f) {
    return {[=](double t) -> Vec3 { return center + amplitude * std::sin(omega * t); },
            [=](double t) -> Vec3 { return amplitude * omega * std::cos(omega * t); },
            [=](double t) -> Vec3 { return -amplitude * omega * omega * std::sin(omega * t); },
            [f](double) { return f; }};
  }
};

/// Largest deviation between xdot_d and a central difference of x_d on a
/// uniform grid over [t0, t1].
inline double reference_consistency_error(const ReferenceTrajectory& ref, double t0, double t1,
                                          double h) {
  double worst = 0.0;
  for (double t = t0 + h; t < t1 - h; t += h) {
    const Vec3 fd = (ref.x_d(t + h) - ref.x_d(t - h)) / (2.0 * h);
    worst = std::max(worst, (fd - ref.xdot_d(t)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace sandbot
