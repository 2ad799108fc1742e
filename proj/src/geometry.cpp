#include "kelo/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace kelo {

Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) {
  Eigen::Matrix3d rt = p.rotation.transpose();
  return Pose{rt, -(rt * p.translation)};
}

Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d K = hat(phi);
  if (theta < 1e-8) {
    // Taylor form; Rodrigues divides by theta.
    return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + s * K + c * K * K;
}

double rotation_angle(const Eigen::Matrix3d& R) {
  const double arg = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(arg);
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  const double theta = rotation_angle(R);
  if (theta < 1e-10) {
    // First order: R ~ I + hat(phi).
    return Eigen::Vector3d(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0),
                           R(1, 0) - R(0, 1)) *
           0.5;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the skew part vanishes; recover the axis from R + I.
    Eigen::Matrix3d S = 0.5 * (R + Eigen::Matrix3d::Identity());
    Eigen::Vector3d axis;
    int k = 0;
    S.diagonal().maxCoeff(&k);
    axis = S.col(k) / std::sqrt(std::max(S(k, k), 1e-12));
    axis.normalize();
    // Fix the sign using the (small) skew part.
    Eigen::Vector3d w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (w.dot(axis) < 0.0) axis = -axis;
    return axis * theta;
  }
  Eigen::Vector3d w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return w * (theta / (2.0 * std::sin(theta)));
}

Pose se3_exp(const Twist& xi) {
  return Pose{so3_exp(xi.phi), xi.rho};
}

double deviation_bound(const Pose& delta, double r) {
  const double theta = rotation_angle(delta.rotation);
  return delta.translation.norm() + 2.0 * r * std::sin(0.5 * theta);
}

Pose interpolate_pose(const Pose& motion, double f) {
  const Eigen::Vector3d phi = so3_log(motion.rotation);
  return Pose{so3_exp(f * phi), f * motion.translation};
}

}  // namespace kelo
