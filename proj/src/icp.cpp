#include "kelo/icp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "kelo/threading.hpp"

namespace kelo {

void ThresholdState::recompute() {
  if (deviations_.empty()) {
    tau_t_ = params_.tau_default;
    sigma_t_ = tau_t_ / 3.0;
    return;
  }
  double sum_sq = 0.0;
  for (const double d : deviations_) sum_sq += d * d;
  const double rms = std::sqrt(sum_sq / static_cast<double>(deviations_.size()));
  sigma_t_ = std::max(rms, params_.tau_floor / 3.0);
  tau_t_ = 3.0 * sigma_t_;
}

ThresholdState update_threshold(ThresholdState state, const Pose& delta_pose,
                                double max_range) {
  if (!(max_range > 0.0))
    throw std::invalid_argument("update_threshold: max_range <= 0");
  const double dev = deviation_bound(delta_pose, max_range);
  if (dev >= state.params_.delta_min) state.deviations_.push_back(dev);
  state.recompute();
  return state;
}

double gm_rho(double e, double sigma_t) {
  const double e2 = e * e;
  return 0.5 * e2 / (sigma_t / 3.0 + e2);
}

double gm_weight(double e, double sigma_t) {
  const double denom = sigma_t / 3.0 + e * e;
  return 1.0 / (denom * denom);
}

Eigen::Matrix<double, 3, 6> jacobian_p2p(const Eigen::Vector3d& p,
                                         const Pose& pose) {
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = Eigen::Matrix3d::Identity();
  j.rightCols<3>() = -hat(pose.apply(p));
  return j;
}

Eigen::Matrix<double, 3, 6> jacobian_p2l(const Eigen::Vector3d& p,
                                         const Eigen::Vector3d& n,
                                         const Pose& pose) {
  if (std::abs(n.norm() - 1.0) > 1e-6) throw NonUnitNormal{};
  const Eigen::Matrix3d nnt = n * n.transpose();
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = nnt;
  j.rightCols<3>() = -nnt * hat(pose.apply(p));
  return j;
}

std::vector<Correspondence> associate(const PointCloud& scan, const Pose& pose,
                                      const VoxelHashMap& map, double tau_t) {
  if (!(tau_t > 0.0)) throw std::invalid_argument("associate: tau_t <= 0");
  const std::size_t n = scan.size();
  std::vector<std::uint8_t> accepted(n, 0);
  std::vector<Correspondence> slots(n);

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::Vector3d world = pose.apply(scan.positions[i]);
      const auto point_hit = map.nearest_point(world, tau_t);
      const auto surfel_hit = map.nearest_surfel(world, 3.0 * tau_t);

      double point_res = std::numeric_limits<double>::infinity();
      if (point_hit) point_res = point_hit->second;
      double plane_res = std::numeric_limits<double>::infinity();
      if (surfel_hit)
        plane_res = std::abs(
            surfel_hit->first.normal.dot(world - surfel_hit->first.anchor));

      Correspondence c;
      c.scan_point = scan.positions[i];
      if (plane_res < point_res) {
        c.target_point = surfel_hit->first.anchor;
        c.target_normal = surfel_hit->first.normal;
        c.kind = ResidualKind::kPointToPlane;
        c.distance = plane_res;
      } else if (point_hit) {
        c.target_point = point_hit->first;
        c.kind = ResidualKind::kPointToPoint;
        c.distance = point_res;
      } else {
        continue;
      }
      if (c.distance > tau_t) continue;
      slots[i] = c;
      accepted[i] = 1;
    }
  });

  std::vector<Correspondence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (accepted[i]) out.push_back(slots[i]);
  return out;
}

namespace {

Eigen::Vector3d residual_of(const Correspondence& c, const Pose& pose) {
  const Eigen::Vector3d d = pose.apply(c.scan_point) - c.target_point;
  if (c.kind == ResidualKind::kPointToPlane)
    return c.target_normal * c.target_normal.dot(d);
  return d;
}

double objective_of(std::span<const Correspondence> correspondences,
                    const Pose& pose, double sigma_t) {
  double total = 0.0;
  for (const auto& c : correspondences)
    total += gm_rho(residual_of(c, pose).norm(), sigma_t);
  return total;
}

}  // namespace

Twist gauss_newton_step(std::span<const Correspondence> correspondences,
                        const Pose& pose, double sigma_t) {
  if (correspondences.empty()) throw NoCorrespondences{};

  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  for (const auto& c : correspondences) {
    const Eigen::Vector3d e = residual_of(c, pose);
    const Eigen::Matrix<double, 3, 6> j =
        c.kind == ResidualKind::kPointToPlane
            ? jacobian_p2l(c.scan_point, c.target_normal, pose)
            : jacobian_p2p(c.scan_point, pose);
    const double w = gm_weight(e.norm(), sigma_t);
    h.noalias() += w * j.transpose() * j;
    b.noalias() -= w * j.transpose() * e;
  }

  const auto solve_if_full_rank =
      [](const Eigen::Matrix<double, 6, 6>& m,
         const Eigen::Matrix<double, 6, 1>& rhs,
         Eigen::Matrix<double, 6, 1>& out) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(m);
        const double lmax = eig.eigenvalues()(5);
        const double lmin = eig.eigenvalues()(0);
        if (!(lmax > 0.0) || lmin <= lmax * 1e-12) return false;
        out = m.ldlt().solve(rhs);
        return true;
      };

  Eigen::Matrix<double, 6, 1> xi;
  if (solve_if_full_rank(h, b, xi)) return Twist::from_vector(xi);

  // Ill-conditioned: escalate Levenberg damping on the diagonal.
  for (double mu = 1e-8; mu <= 1.0; mu *= 10.0) {
    Eigen::Matrix<double, 6, 6> damped = h;
    damped.diagonal() += mu * h.diagonal().cwiseAbs();
    if (solve_if_full_rank(damped, b, xi)) return Twist::from_vector(xi);
  }
  throw SingularSystem{};
}

IcpResult register_scan_to_map(const PointCloud& scan, const VoxelHashMap& map,
                               const Pose& initial_guess,
                               const ThresholdState& threshold,
                               const IcpParams& params) {
  if (scan.empty())
    throw std::invalid_argument("register_scan_to_map: empty scan");

  IcpResult result;
  result.pose = initial_guess;
  const double sigma_t = threshold.sigma();
  const double tau_t = threshold.tau();

  for (int iter = 0; iter < params.max_iters; ++iter) {
    const auto correspondences = associate(scan, result.pose, map, tau_t);
    if (correspondences.empty()) {
      if (iter == 0) throw NoCorrespondences{};
      break;
    }

    const Twist step = gauss_newton_step(correspondences, result.pose, sigma_t);
    const double before = objective_of(correspondences, result.pose, sigma_t);

    // Halve the step while it increases the robust objective over this
    // iteration's association.
    Eigen::Matrix<double, 6, 1> xi = step.vector();
    Pose updated;
    double after = 0.0;
    int halvings = 0;
    for (;; ++halvings) {
      updated = compose(se3_exp(Twist::from_vector(xi)), result.pose);
      after = objective_of(correspondences, updated, sigma_t);
      if (after <= before || halvings >= params.max_halvings) break;
      xi *= 0.5;
    }
    if (after > before) {
      // No acceptable step; keep the current pose and stop.
      break;
    }
    result.pose = updated;

    IcpIteration it;
    it.correspondences = static_cast<int>(correspondences.size());
    double sum_sq = 0.0;
    for (const auto& c : correspondences)
      sum_sq += residual_of(c, result.pose).squaredNorm();
    it.rms_residual =
        std::sqrt(sum_sq / static_cast<double>(correspondences.size()));
    it.objective = after;
    it.step_norm = xi.norm();
    it.halvings = halvings;
    result.iterations.push_back(it);

    if (xi.norm() < params.epsilon_conv) break;
  }
  return result;
}

}  // namespace kelo
