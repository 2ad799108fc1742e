/**
 * \file geometry.hpp
 * \brief SO(3)/SE(3) primitives for the registration pipeline.
 */
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace kelo {

/// Rigid transform: p -> R * p + t. Rotation kept as a matrix because the
/// registration math is all matrix-form; a quaternion accessor exists for I/O.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return apply(p); }

  Eigen::Quaterniond quaternion() const {
    return Eigen::Quaterniond(rotation);
  }
};

/// 6-dof perturbation, translational part first: xi = [rho; phi].
struct Twist {
  Eigen::Vector3d rho = Eigen::Vector3d::Zero();
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << rho, phi;
    return v;
  }
  static Twist from_vector(const Eigen::Matrix<double, 6, 1>& v) {
    return Twist{v.head<3>(), v.tail<3>()};
  }
  double norm() const { return vector().norm(); }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// Skew-symmetric matrix of v, so that hat(v) * w == v.cross(w).
Eigen::Matrix3d hat(const Eigen::Vector3d& v);

/// Rodrigues rotation exponential with a 2nd-order Taylor branch for
/// angles below 1e-8.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi);

/// Inverse of so3_exp (rotation vector). Handles the near-pi case by
/// extracting the axis from the symmetric part.
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);

/// Rotation angle in radians; the trace argument is clamped to [-1, 1].
double rotation_angle(const Eigen::Matrix3d& R);

/// Twist -> Pose: rotation is so3_exp(phi), translation is rho. This is the
/// update parameterization of the scan-to-map solver, which composes the
/// result on the left of the current pose.
Pose se3_exp(const Twist& xi);

/// Upper bound on ||delta.R * p + delta.t - p|| over all points with
/// ||p|| <= r:  ||t|| + 2 r sin(theta / 2).
double deviation_bound(const Pose& delta, double r);

/// Fraction of a relative motion: rotation by f * angle about the same axis,
/// translation scaled by f. f may lie outside [0, 1].
Pose interpolate_pose(const Pose& motion, double f);

}  // namespace kelo
