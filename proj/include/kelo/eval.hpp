/**
 * \file eval.hpp
 * \brief Trajectory and registration metrics: segment-based relative pose
 *        error, per-pair RTE/RRE/recall, feature matching recall.
 */
#pragma once

#include <Eigen/Core>
#include <span>
#include <stdexcept>
#include <vector>

#include "kelo/geometry.hpp"

namespace kelo {

struct RpeReport {
  double t_err_percent = 0.0;       // mean ||t_err|| / L * 100
  double r_err_deg_per_100m = 0.0;  // mean angle / L * 100, degrees
  struct LengthBucket {
    double length = 0.0;  // segment length, meters
    double t_err_percent = 0.0;
    double r_err_deg_per_100m = 0.0;
    std::size_t segments = 0;
  };
  std::vector<LengthBucket> per_length;  // lengths 100..800 with segments
};

struct TrajectoryTooShort : std::runtime_error {
  TrajectoryTooShort()
      : std::runtime_error("no 100 m segment in the ground-truth trajectory") {}
};
struct TrajectoryLengthMismatch : std::runtime_error {
  TrajectoryLengthMismatch(std::size_t gt, std::size_t est)
      : std::runtime_error("trajectory lengths differ: gt " +
                           std::to_string(gt) + ", est " +
                           std::to_string(est)) {}
};

/// Segment-based relative pose error over lengths {100, ..., 800} m of
/// accumulated ground-truth path, evaluated from every start frame. Segment
/// ends are the first frame reaching the length (no interpolation).
RpeReport kitti_rpe(std::span<const Pose> gt, std::span<const Pose> est);

struct PairMetrics {
  double rte_cm = 0.0;
  double rre_deg = 0.0;
  bool success = false;  // rte <= rte_max && rre <= rre_max
};

PairMetrics pair_metrics(const Pose& gt, const Pose& est,
                         double rte_max_cm = 200.0, double rre_max_deg = 5.0);

/// One evaluated cloud pair: putative matches (src[i] <-> dst[i]) plus the
/// ground-truth pose mapping src into dst's frame.
struct FmrPair {
  std::vector<Eigen::Vector3d> src;
  std::vector<Eigen::Vector3d> dst;
  Pose gt_pose;
};

struct EmptyPairList : std::runtime_error {
  EmptyPairList() : std::runtime_error("fmr: empty pair list") {}
};

/// Fraction of pairs whose inlier ratio (matches with
/// ||T_gt(p) - q|| <= tau_1) reaches tau_2; the boundary ratio == tau_2
/// counts as matched. A pair with no putative matches counts as unmatched.
double fmr(std::span<const FmrPair> pairs, double tau_1, double tau_2);

}  // namespace kelo
