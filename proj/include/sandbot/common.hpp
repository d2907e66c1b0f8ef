/**
 * @file common.hpp
 * @brief Shared linear-algebra aliases and the error type used across sandbot.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Dense>

namespace sandbot {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Number of joints of the simulated arm (x, y, theta1, theta2).
inline constexpr int kJoints = 4;
/// Task-space dimension (p_x, p_y, phi).
inline constexpr int kTaskDim = 3;

enum class ErrorCode {
  InvalidArgument,
  SingularJacobian,
  IntegrationDiverged,
  JointLimitViolation,
  ComplexRoots,
  InsufficientData,
  EmptyScan,
  TooFewPoints,
  Diverged,
  MissingIntensity,
  IterationLimit,
  InvalidEndpoint,
  NoPathFound,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::IntegrationDiverged: return "IntegrationDiverged";
    case ErrorCode::JointLimitViolation: return "JointLimitViolation";
    case ErrorCode::ComplexRoots: return "ComplexRoots";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyScan: return "EmptyScan";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::MissingIntensity: return "MissingIntensity";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::InvalidEndpoint: return "InvalidEndpoint";
    case ErrorCode::NoPathFound: return "NoPathFound";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace sandbot
