/**
 * \file icp.hpp
 * \brief Robust scan-to-map registration.
 *
 * Data association searches the nearest map point and the nearest surfel
 * separately and keeps the candidate with the smaller residual distance,
 * gated by an adaptive three-sigma threshold. The pose is refined by
 * Gauss-Newton on SE(3) with Geman-McClure IRLS weights 1/(sigma_t/3 + e^2)^2.
 */
#pragma once

#include <Eigen/Core>
#include <span>
#include <stdexcept>
#include <vector>

#include "kelo/cloud.hpp"
#include "kelo/geometry.hpp"
#include "kelo/voxel_map.hpp"

namespace kelo {

enum class ResidualKind { kPointToPoint, kPointToPlane };

struct Correspondence {
  Eigen::Vector3d scan_point;     // sensor frame
  Eigen::Vector3d target_point;   // map point, or surfel anchor
  Eigen::Vector3d target_normal;  // unit normal (point-to-plane only)
  ResidualKind kind = ResidualKind::kPointToPoint;
  double distance = 0.0;          // residual distance at association time
};

struct ThresholdParams {
  double delta_min = 0.1;    // deadband: smaller deviations are not retained
  double tau_default = 2.0;  // cold-start threshold before any deviation
  double tau_floor = 0.3;    // lower bound on tau_t
};

/// Running scale of pose-correction magnitudes. sigma_t is the zero-mean RMS
/// of retained deviations (floored so that tau_t = 3 sigma_t >= tau_floor);
/// before any deviation is retained, tau_t = tau_default.
class ThresholdState {
 public:
  ThresholdState() { recompute(); }
  explicit ThresholdState(const ThresholdParams& params) : params_(params) {
    recompute();
  }

  double sigma() const { return sigma_t_; }
  double tau() const { return tau_t_; }
  const std::vector<double>& deviations() const { return deviations_; }
  const ThresholdParams& params() const { return params_; }

 private:
  friend ThresholdState update_threshold(ThresholdState state,
                                         const Pose& delta_pose,
                                         double max_range);
  void recompute();

  ThresholdParams params_;
  std::vector<double> deviations_;
  double sigma_t_ = 0.0;
  double tau_t_ = 0.0;
};

/// Appends deviation_bound(delta_pose, max_range) to the history when it
/// clears the deadband, and refreshes sigma_t / tau_t.
ThresholdState update_threshold(ThresholdState state, const Pose& delta_pose,
                                double max_range);

/// Geman-McClure robust cost (e^2 / 2) / (sigma_t/3 + e^2).
double gm_rho(double e, double sigma_t);

/// IRLS weight 1/(sigma_t/3 + e^2)^2 of the normal equations; equals
/// rho'(e)/e up to the constant factor sigma_t/3, which cancels from the
/// solve.
double gm_weight(double e, double sigma_t);

/// Jacobian [ I | -(R p + t)^ ] of the point-to-point residual R p + t - q
/// w.r.t. the left perturbation [rho; phi].
Eigen::Matrix<double, 3, 6> jacobian_p2p(const Eigen::Vector3d& p,
                                         const Pose& pose);

struct NonUnitNormal : std::runtime_error {
  NonUnitNormal() : std::runtime_error("normal is not unit length") {}
};

/// Jacobian [ n n^T | -n n^T (R p + t)^ ] of the point-to-plane residual
/// n n^T (R p + t - q). Throws NonUnitNormal when |||n|| - 1| > 1e-6.
Eigen::Matrix<double, 3, 6> jacobian_p2l(const Eigen::Vector3d& p,
                                         const Eigen::Vector3d& n,
                                         const Pose& pose);

/// Hybrid association of scan points (sensor frame, mapped by pose) against
/// the map. Point candidates are searched within tau_t; surfel candidates
/// within 3 tau_t by anchor distance, with their plane residual gated by
/// tau_t. Points without an accepted candidate are skipped; output is in
/// scan order.
std::vector<Correspondence> associate(const PointCloud& scan, const Pose& pose,
                                      const VoxelHashMap& map, double tau_t);

struct SingularSystem : std::runtime_error {
  SingularSystem()
      : std::runtime_error("normal equations rank-deficient (degenerate geometry)") {}
};
struct NoCorrespondences : std::runtime_error {
  NoCorrespondences()
      : std::runtime_error("association produced no correspondences") {}
};

/// One weighted Gauss-Newton step: solves
///   sum w_i J_i^T J_i dxi = -sum w_i J_i^T e_i
/// with w_i = gm_weight(||e_i||, sigma_t). Levenberg damping (mu * diag) is
/// added only when the condition estimate exceeds 1e12; throws SingularSystem
/// if the system stays rank-deficient.
Twist gauss_newton_step(std::span<const Correspondence> correspondences,
                        const Pose& pose, double sigma_t);

struct IcpParams {
  double epsilon_conv = 1e-4;  // twist-norm convergence threshold
  int max_iters = 100;
  int max_halvings = 5;  // step halvings on robust-objective increase
};

struct IcpIteration {
  int correspondences = 0;
  double rms_residual = 0.0;
  double objective = 0.0;  // sum of gm_rho over the iteration's association
  double step_norm = 0.0;
  int halvings = 0;
};

struct IcpResult {
  Pose pose;
  std::vector<IcpIteration> iterations;
};

/// Iterates association and Gauss-Newton updates from the initial guess until
/// the step norm drops below epsilon_conv or max_iters is reached. The update
/// is applied as pose <- se3_exp(dxi) o pose. Steps that increase the robust
/// objective over the iteration's (fixed) association are halved up to
/// max_halvings times. Throws NoCorrespondences when the first association
/// is empty.
IcpResult register_scan_to_map(const PointCloud& scan, const VoxelHashMap& map,
                               const Pose& initial_guess,
                               const ThresholdState& threshold,
                               const IcpParams& params);

}  // namespace kelo
