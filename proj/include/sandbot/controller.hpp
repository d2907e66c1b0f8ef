/**
 * @file controller.hpp
 * @brief Joint-space adaptive impedance controller with an RBF network
 * compensator, plus the runtime Lyapunov descent monitor.
 *
 * Control law:
 *   qdot_r = J^+ (xdot_d - Lambda dx + delta_f_l)
 *   z_q    = qdot - qdot_r
 *   u      = -K_z z_q + W_hat theta(q, qdot, qdot_r, qddot_r) - k_g sgn(z_q) - tau_e
 *   d/dt W_hat_j^T = -L_j theta z_q,j
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "sandbot/common.hpp"

namespace sandbot {

/// Size of the network input (q, qdot, qdot_r, qddot_r).
inline constexpr int kRbfInputDim = 4 * kJoints;

using RbfInput = Eigen::Matrix<double, kRbfInputDim, 1>;

/**
 * Gaussian RBF network with one output per joint. Distances are measured
 * after an elementwise input scaling (all ones reproduces the plain
 * Euclidean kernel).
 */
struct RbfNetwork {
  MatX centers;       // kRbfInputDim x N, one center per column
  VecX widths;        // N, strictly positive
  MatX weights;       // kJoints x N, the estimate W_hat
  MatX learning_rates;  // kJoints x N, diagonal of L_j in row j
  RbfInput input_scale = RbfInput::Ones();

  int size() const { return static_cast<int>(centers.cols()); }

  void validate() const {
    require(centers.rows() == kRbfInputDim, ErrorCode::InvalidArgument, "centers need 16 rows");
    require(widths.size() == centers.cols() && weights.rows() == kJoints &&
                weights.cols() == centers.cols() && learning_rates.rows() == kJoints &&
                learning_rates.cols() == centers.cols(),
            ErrorCode::InvalidArgument, "RBF network dimensions disagree");
    require((widths.array() > 0).all(), ErrorCode::InvalidArgument, "widths must be positive");
    require((learning_rates.array() >= 0).all(), ErrorCode::InvalidArgument,
            "learning rates must be non-negative");
    require(weights.allFinite(), ErrorCode::InvalidArgument, "weights must be finite");
  }
};

struct RbfLayout {
  int num_centers = 64;
  RbfInput lower;
  RbfInput upper;
  Vec4 learning_rate = Vec4::Constant(10.0);
  std::uint64_t seed = 7;

  /// Operating box of the sanding arm: joint range, speeds and reference
  /// accelerations.
  static RbfLayout sanding_default() {
    RbfLayout layout;
    const Vec4 q_hi(1.0, 1.0, 2.0 * M_PI, 2.0 * M_PI);
    const Vec4 v_hi = Vec4::Constant(1.0);
    const Vec4 a_hi = Vec4::Constant(10.0);
    layout.upper << q_hi, v_hi, v_hi, a_hi;
    layout.lower = -layout.upper;
    return layout;
  }
};

inline RbfInput make_rbf_input(const Vec4& q, const Vec4& qdot, const Vec4& qdot_r,
                               const Vec4& qddot_r) {
  RbfInput in;
  in << q, qdot, qdot_r, qddot_r;
  return in;
}

/// Latin-hypercube centers over the layout box; every width is the median
/// pairwise center distance (in scaled coordinates). Weights start at zero.
inline RbfNetwork make_rbf_network(const RbfLayout& layout) {
  const int n = layout.num_centers;
  require(n >= 2, ErrorCode::InvalidArgument, "need at least two centers");
  require((layout.upper.array() > layout.lower.array()).all(), ErrorCode::InvalidArgument,
          "RBF box needs lower < upper");
  std::mt19937_64 rng(layout.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RbfNetwork net;
  net.centers.resize(kRbfInputDim, n);
  std::vector<int> strata(n);
  for (int d = 0; d < kRbfInputDim; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double u = (strata[i] + unit(rng)) / n;
      net.centers(d, i) = layout.lower(d) + u * (layout.upper(d) - layout.lower(d));
    }
  }
  net.input_scale = (2.0 / (layout.upper - layout.lower).array()).matrix();

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dists.push_back(
          (net.centers.col(i) - net.centers.col(j)).cwiseProduct(net.input_scale).norm());
    }
  }
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  net.widths = VecX::Constant(n, *mid);
  net.weights = MatX::Zero(kJoints, n);
  net.learning_rates.resize(kJoints, n);
  for (int j = 0; j < kJoints; ++j) net.learning_rates.row(j).setConstant(layout.learning_rate(j));
  return net;
}

inline VecX rbf_activation(const RbfNetwork& net, const RbfInput& input) {
  const int n = net.size();
  VecX theta(n);
  for (int i = 0; i < n; ++i) {
    const double d2 = (input - net.centers.col(i)).cwiseProduct(net.input_scale).squaredNorm();
    theta(i) = std::exp(-d2 / (2.0 * net.widths(i) * net.widths(i)));
  }
  return theta;
}

inline VecX rbf_activation(const RbfNetwork& net, const Vec4& q, const Vec4& qdot,
                           const Vec4& qdot_r, const Vec4& qddot_r) {
  return rbf_activation(net, make_rbf_input(q, qdot, qdot_r, qddot_r));
}

enum class SignMode { Exact, BoundaryLayer };

struct ControllerGains {
  Vec4 Kz = Vec4::Constant(10.0);
  double kg = 20.0;
  SignMode sign_mode = SignMode::BoundaryLayer;
  double epsilon = 0.02;

  void validate() const {
    require((Kz.array() > 0).all(), ErrorCode::InvalidArgument, "K_z must be positive definite");
    require(kg >= 0, ErrorCode::InvalidArgument, "k_g must be non-negative");
    require(sign_mode == SignMode::Exact || epsilon > 0, ErrorCode::InvalidArgument,
            "boundary layer needs epsilon > 0");
  }
};

inline Vec4 reference_velocity(const Mat43& J_pinv, const Vec3& xdot_d, const Vec3& dx,
                               const Vec3& delta_f_l, const Vec3& lambda) {
  return J_pinv * (xdot_d - lambda.cwiseProduct(dx) + delta_f_l);
}

inline Vec4 impedance_vector_joint(const Vec4& qdot, const Vec4& qdot_r) { return qdot - qdot_r; }

/// sgn with sgn(0) = 0, or its saturation replacement of half-width epsilon.
inline Vec4 switching_term(const ControllerGains& gains, const Vec4& z_q) {
  Vec4 s;
  for (int i = 0; i < kJoints; ++i) {
    if (gains.sign_mode == SignMode::Exact) {
      s(i) = static_cast<double>((z_q(i) > 0) - (z_q(i) < 0));
    } else {
      s(i) = std::clamp(z_q(i) / gains.epsilon, -1.0, 1.0);
    }
  }
  return s;
}

inline Vec4 control_law(const ControllerGains& gains, const RbfNetwork& net, const Vec4& z_q,
                        const VecX& theta, const Vec4& tau_e) {
  const Vec4 nn = net.weights * theta;
  return -gains.Kz.cwiseProduct(z_q) + nn - gains.kg * switching_term(gains, z_q) - tau_e;
}

/// Explicit Euler step of the row-wise adaptation law.
inline void weight_update_in_place(RbfNetwork& net, const VecX& theta, const Vec4& z_q, double dt) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
  for (int j = 0; j < kJoints; ++j) {
    if (z_q(j) == 0.0) continue;
    net.weights.row(j) -= dt * z_q(j) * net.learning_rates.row(j).cwiseProduct(theta.transpose());
  }
}

inline RbfNetwork weight_update(RbfNetwork net, const VecX& theta, const Vec4& z_q, double dt) {
  weight_update_in_place(net, theta, z_q, dt);
  return net;
}

// --- Lyapunov monitor -------------------------------------------------------

struct LyapunovSample {
  double time = 0.0;
  Vec4 z_q = Vec4::Zero();
  Mat4 M = Mat4::Identity();
};

struct LyapunovOptions {
  double window = 0.5;     // s, moving-average length
  double transient = 1.0;  // s, ignored before descent is checked
  double settle_threshold = 1e-2;
  /// Rises of the moving average above its running minimum smaller than
  /// rel_tolerance * (moving average at the end of the transient) + abs_tolerance
  /// are treated as measurement-level fluctuation.
  double rel_tolerance = 0.05;
  double abs_tolerance = 1e-12;
};

struct LyapunovReport {
  std::vector<double> times;
  std::vector<double> v_obs;
  std::vector<double> moving_average;
  bool descending = false;
  std::optional<double> first_violation_time;
  double worst_rise = 0.0;
  /// Earliest time after which ||z_q|| stays below the threshold.
  std::optional<double> settling_time;
  bool passed() const { return descending && settling_time.has_value(); }
};

/**
 * Checks observable consequences of the descent theorem: V_obs = 1/2 z^T M z
 * must have a non-increasing moving average after the transient, and
 * ||z_q|| must eventually stay below the threshold.
 */
inline LyapunovReport lyapunov_monitor(const std::vector<LyapunovSample>& samples,
                                       const LyapunovOptions& options = {}) {
  require(samples.size() >= 2, ErrorCode::InsufficientData, "monitor needs at least two samples");
  require(options.window > 0, ErrorCode::InvalidArgument, "window must be positive");
  LyapunovReport report;
  const std::size_t n = samples.size();
  report.times.reserve(n);
  report.v_obs.reserve(n);
  for (const auto& s : samples) {
    require(s.z_q.allFinite() && s.M.allFinite(), ErrorCode::InvalidArgument, "non-finite sample");
    report.times.push_back(s.time);
    report.v_obs.push_back(0.5 * s.z_q.dot(s.M * s.z_q));
  }
  for (std::size_t i = 1; i < n; ++i) {
    require(report.times[i] > report.times[i - 1], ErrorCode::InvalidArgument,
            "sample times must increase");
  }

  // Trailing moving average over [t - window, t].
  report.moving_average.resize(n);
  double sum = 0.0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += report.v_obs[i];
    while (report.times[i] - report.times[start] > options.window + 1e-12) {
      sum -= report.v_obs[start];
      ++start;
    }
    report.moving_average[i] = sum / static_cast<double>(i - start + 1);
  }

  std::size_t first = 0;
  while (first < n && report.times[first] < options.transient) ++first;
  report.descending = true;
  if (first < n) {
    const double allowance =
        options.rel_tolerance * report.moving_average[first] + options.abs_tolerance;
    double running_min = report.moving_average[first];
    for (std::size_t i = first + 1; i < n; ++i) {
      const double rise = report.moving_average[i] - running_min;
      report.worst_rise = std::max(report.worst_rise, rise);
      if (rise > allowance && report.descending) {
        report.descending = false;
        report.first_violation_time = report.times[i];
      }
      running_min = std::min(running_min, report.moving_average[i]);
    }
  }

  // Settling: the last sample above threshold determines when it stays below.
  std::optional<std::size_t> last_above;
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i].z_q.norm() >= options.settle_threshold) last_above = i;
  }
  if (!last_above) {
    report.settling_time = report.times.front();
  } else if (*last_above + 1 < n) {
    report.settling_time = report.times[*last_above + 1];
  }
  return report;
}

}  // namespace sandbot
