#include "kelo/eval.hpp"

#include <algorithm>
#include <cmath>

namespace kelo {

namespace {
constexpr double kRad2Deg = 180.0 / M_PI;
const double kLengths[] = {100.0, 200.0, 300.0, 400.0,
                           500.0, 600.0, 700.0, 800.0};
}  // namespace

RpeReport kitti_rpe(std::span<const Pose> gt, std::span<const Pose> est) {
  if (gt.size() != est.size())
    throw TrajectoryLengthMismatch(gt.size(), est.size());
  if (gt.size() < 2) throw TrajectoryTooShort{};

  const std::size_t n = gt.size();
  std::vector<double> path(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    path[i] = path[i - 1] + (gt[i].translation - gt[i - 1].translation).norm();

  struct Acc {
    double t = 0.0;
    double r = 0.0;
    std::size_t count = 0;
  };
  Acc per_length[std::size(kLengths)];

  for (std::size_t first = 0; first < n; ++first) {
    std::size_t last = first;
    for (std::size_t li = 0; li < std::size(kLengths); ++li) {
      const double target = path[first] + kLengths[li];
      while (last < n && path[last] < target) ++last;
      if (last >= n) break;

      const Pose delta_gt = compose(inverse(gt[first]), gt[last]);
      const Pose delta_est = compose(inverse(est[first]), est[last]);
      const Pose error = compose(inverse(delta_est), delta_gt);
      per_length[li].t += error.translation.norm() / kLengths[li];
      per_length[li].r +=
          rotation_angle(error.rotation) * kRad2Deg / kLengths[li];
      ++per_length[li].count;
    }
  }

  RpeReport report;
  Acc total;
  for (std::size_t li = 0; li < std::size(kLengths); ++li) {
    const Acc& acc = per_length[li];
    if (acc.count == 0) continue;
    RpeReport::LengthBucket bucket;
    bucket.length = kLengths[li];
    bucket.t_err_percent = acc.t / static_cast<double>(acc.count) * 100.0;
    bucket.r_err_deg_per_100m = acc.r / static_cast<double>(acc.count) * 100.0;
    bucket.segments = acc.count;
    report.per_length.push_back(bucket);
    total.t += acc.t;
    total.r += acc.r;
    total.count += acc.count;
  }
  if (total.count == 0) throw TrajectoryTooShort{};
  report.t_err_percent = total.t / static_cast<double>(total.count) * 100.0;
  report.r_err_deg_per_100m = total.r / static_cast<double>(total.count) * 100.0;
  return report;
}

PairMetrics pair_metrics(const Pose& gt, const Pose& est, double rte_max_cm,
                         double rre_max_deg) {
  PairMetrics out;
  out.rte_cm = (est.translation - gt.translation).norm() * 100.0;
  out.rre_deg =
      rotation_angle(gt.rotation.transpose() * est.rotation) * kRad2Deg;
  out.success = out.rte_cm <= rte_max_cm && out.rre_deg <= rre_max_deg;
  return out;
}

double fmr(std::span<const FmrPair> pairs, double tau_1, double tau_2) {
  if (pairs.empty()) throw EmptyPairList{};
  if (!(tau_1 > 0.0) || !(tau_2 > 0.0 && tau_2 < 1.0))
    throw std::invalid_argument("fmr: need tau_1 > 0 and tau_2 in (0, 1)");

  std::size_t matched = 0;
  for (const auto& pair : pairs) {
    if (pair.src.size() != pair.dst.size())
      throw std::invalid_argument("fmr: src/dst size mismatch");
    if (pair.src.empty()) continue;
    std::size_t inliers = 0;
    for (std::size_t i = 0; i < pair.src.size(); ++i) {
      if ((pair.gt_pose.apply(pair.src[i]) - pair.dst[i]).norm() <= tau_1)
        ++inliers;
    }
    const double ratio =
        static_cast<double>(inliers) / static_cast<double>(pair.src.size());
    if (ratio >= tau_2) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(pairs.size());
}

}  // namespace kelo
