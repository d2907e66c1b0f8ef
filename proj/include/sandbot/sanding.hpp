/**
 * @file sanding.hpp
 * @brief Closed-loop sanding simulation: the adaptive impedance controller at
 * the control rate driving the arm dynamics at the physics rate against the
 * belt.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sandbot/common.hpp"
#include "sandbot/controller.hpp"
#include "sandbot/dynamics.hpp"
#include "sandbot/impedance.hpp"

namespace sandbot {

struct SandingParams {
  double duration = 5.0;       // s
  double dt_control = 1e-3;    // s
  double dt_physics = 1e-4;    // s
  double force_noise = 0.1;    // N, std of each sensed force component
  double disturbance = 0.0;    // N m, amplitude of a sinusoid on every joint
  double disturbance_frequency = 1.0;  // Hz
  double pinv_damping = 0.0;
  double transient = 1.0;      // s
  double steady_fraction = 0.3;
  std::uint64_t seed = 1;

  int substeps() const { return static_cast<int>(std::lround(dt_control / dt_physics)); }

  void validate() const {
    require(duration > 0 && dt_physics > 0 && dt_control > 0, ErrorCode::InvalidArgument,
            "sanding times must be positive");
    require(std::abs(substeps() * dt_physics - dt_control) <= 1e-9 * dt_control && substeps() >= 1,
            ErrorCode::InvalidArgument, "dt_control must be an integer multiple of dt_physics");
    require(force_noise >= 0 && steady_fraction > 0 && steady_fraction <= 1,
            ErrorCode::InvalidArgument, "invalid sanding noise or steady fraction");
  }
};

/// Everything that differs between one sanding run and the next.
struct SandingSetup {
  BeltContact contact;
  Vec4 q0 = Vec4::Zero();
  Vec3 x_d = Vec3::Zero();
  Vec3 f_d = Vec3(-25.0, 0.0, 0.0);
};

/// One control-step record.
struct SandingRecord {
  double t = 0.0;
  Vec4 q, qdot, u, z_q;
  Vec3 x, f_e, f_meas, z, delta_f_l;
  double weight_norm = 0.0;
  double v_obs = 0.0;
};

struct SandingResult {
  std::vector<SandingRecord> records;
  double steady_force = 0.0;        // mean true normal force over the steady window
  double force_error = 0.0;         // steady_force - f_d along the normal
  double zq_floor = 0.0;            // max ||z_q|| over the steady window
  double max_zq_after_transient = 0.0;
  double normal_impulse = 0.0;      // integral of |f_n| dt, N s
  double final_dx = 0.0;            // ||x - x_d|| at the end
  JointState final_state;
  RbfNetwork network;
};

/**
 * Runs the controller from rest at setup.q0. The sensed force is the true
 * normal contact force plus Gaussian noise; the belt's tangential abrasion
 * force acts on the arm but is not sensed.
 */
inline SandingResult sanding_phase(const RobotModel& model, const ImpedanceSpec& spec,
                                   const ControllerGains& gains, RbfNetwork net,
                                   const SandingSetup& setup, const SandingParams& params) {
  model.validate();
  gains.validate();
  net.validate();
  setup.contact.validate();
  params.validate();

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int nsub = params.substeps();
  const double dtc = params.dt_control;
  const auto steps = static_cast<std::size_t>(std::llround(params.duration / dtc));

  SandingResult out;
  out.records.reserve(steps);
  JointState state{setup.q0, Vec4::Zero(), 0.0};
  ForceFilterState filter;
  Vec4 qdot_r_prev = Vec4::Zero();
  bool have_prev = false;

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dtc;
    const Mat34 J = jacobian(model, state.q);
    const TaskState ts{forward_kinematics(model, state.q), J * state.qdot};
    const Vec3 f_e = contact_force(setup.contact, ts);
    Vec3 f_meas = f_e;
    if (params.force_noise > 0) {
      for (int i = 0; i < 3; ++i) f_meas(i) += params.force_noise * gauss(rng);
    }
    const Vec3 delta_f = f_meas - setup.f_d;
    const Vec3 dx = ts.x - setup.x_d;

    const Mat43 Jp = pseudo_inverse(J, params.pinv_damping);
    const Vec4 qdot_r = reference_velocity(Jp, Vec3::Zero(), dx, filter.delta_f_l, spec.Lambda);
    const Vec4 qddot_r = have_prev ? Vec4((qdot_r - qdot_r_prev) / dtc) : Vec4::Zero();
    qdot_r_prev = qdot_r;
    have_prev = true;
    const Vec4 z_q = impedance_vector_joint(state.qdot, qdot_r);
    const VecX theta = rbf_activation(net, state.q, state.qdot, qdot_r, qddot_r);
    const Vec4 tau_e = J.transpose() * f_meas;
    const Vec4 u = control_law(gains, net, z_q, theta, tau_e);

    SandingRecord rec;
    rec.t = t;
    rec.q = state.q;
    rec.qdot = state.qdot;
    rec.u = u;
    rec.z_q = z_q;
    rec.x = ts.x;
    rec.f_e = f_e;
    rec.f_meas = f_meas;
    rec.z = J * z_q;
    rec.delta_f_l = filter.delta_f_l;
    rec.weight_norm = net.weights.norm();
    rec.v_obs = 0.5 * z_q.dot(detail::inertia_terms(model, state.q).M * z_q);
    out.records.push_back(rec);

    weight_update_in_place(net, theta, z_q, dtc);
    filter = filter_force_step(filter, delta_f, spec, dtc);

    for (int s = 0; s < nsub; ++s) {
      const double ts_phys = t + s * params.dt_physics;
      const Vec4 dist = Vec4::Constant(
          params.disturbance * std::sin(2.0 * M_PI * params.disturbance_frequency * ts_phys));
      const JointState before = state;
      state = step(model, state, u, setup.contact, params.dt_physics, dist);
      // Impulse of the normal force, trapezoid in time.
      const double fn0 = contact_force(setup.contact, task_state(model, before)).norm();
      const double fn1 = contact_force(setup.contact, task_state(model, state)).norm();
      out.normal_impulse += 0.5 * (fn0 + fn1) * params.dt_physics;
    }
    state.time = t + dtc;
  }

  const std::size_t first_steady =
      static_cast<std::size_t>(std::floor((1.0 - params.steady_fraction) * out.records.size()));
  double sum = 0.0;
  for (std::size_t i = first_steady; i < out.records.size(); ++i) {
    const auto& r = out.records[i];
    sum += r.f_e.dot(setup.contact.normal);
    out.zq_floor = std::max(out.zq_floor, r.z_q.norm());
  }
  const std::size_t n_steady = out.records.size() - first_steady;
  out.steady_force = n_steady > 0 ? sum / static_cast<double>(n_steady) : 0.0;
  out.force_error = out.steady_force - setup.f_d.dot(setup.contact.normal);
  for (const auto& r : out.records) {
    if (r.t >= params.transient) out.max_zq_after_transient = std::max(out.max_zq_after_transient, r.z_q.norm());
  }
  out.final_state = state;
  out.final_dx = (forward_kinematics(model, state.q) - setup.x_d).norm();
  out.network = std::move(net);
  return out;
}

/// Lyapunov samples with the inertia matrix evaluated along the run.
inline std::vector<LyapunovSample> lyapunov_samples(const RobotModel& model,
                                                    const SandingResult& result) {
  std::vector<LyapunovSample> out;
  out.reserve(result.records.size());
  for (const auto& r : result.records) {
    out.push_back({r.t, r.z_q, detail::inertia_terms(model, r.q).M});
  }
  return out;
}

/**
 * Largest ||dz/dt + Gamma z|| after `transient`, with dz/dt taken as a
 * central difference over +-`span` control steps.
 */
inline double impedance_realization_residual(const SandingResult& result, const ImpedanceSpec& spec,
                                             double transient, std::size_t span) {
  const auto& r = result.records;
  require(span >= 1 && r.size() > 2 * span, ErrorCode::InsufficientData,
          "run too short for the residual");
  double worst = 0.0;
  for (std::size_t i = span; i + span < r.size(); ++i) {
    if (r[i].t < transient) continue;
    const Vec3 zdot = (r[i + span].z - r[i - span].z) / (r[i + span].t - r[i - span].t);
    worst = std::max(worst, (zdot + spec.Gamma.cwiseProduct(r[i].z)).norm());
  }
  return worst;
}

inline void write_sanding_csv(const std::string& path, const SandingResult& result) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << "t,q0,q1,q2,q3,qd0,qd1,qd2,qd3,x,y,phi,fe_x,fe_y,fe_phi,"
         "zq0,zq1,zq2,zq3,zq_norm,w_norm,u0,u1,u2,u3,v_obs\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out << buf;
  };
  for (const auto& r : result.records) {
    std::snprintf(buf, sizeof buf, "%.9g", r.t);
    out << buf;
    for (int j = 0; j < 4; ++j) put(r.q(j));
    for (int j = 0; j < 4; ++j) put(r.qdot(j));
    for (int j = 0; j < 3; ++j) put(r.x(j));
    for (int j = 0; j < 3; ++j) put(r.f_e(j));
    for (int j = 0; j < 4; ++j) put(r.z_q(j));
    put(r.z_q.norm());
    put(r.weight_norm);
    for (int j = 0; j < 4; ++j) put(r.u(j));
    put(r.v_obs);
    out << '\n';
  }
}

}  // namespace sandbot
