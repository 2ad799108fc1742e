#include "kelo/matching.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "kelo/rng.hpp"
#include "kelo/threading.hpp"

namespace kelo {

namespace {

constexpr std::int64_t kNone = -1;

/// Per-row nearest neighbor of src rows among valid dst rows; -1 where the
/// src row is invalid. Ties break to the lower dst index.
std::vector<std::int64_t> nearest_rows(const FeatureSet& src,
                                       const FeatureSet& dst) {
  const auto n = static_cast<std::size_t>(src.count());
  std::vector<std::int64_t> nn(n, kNone);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!src.row_valid(static_cast<std::int64_t>(i))) continue;
      double best = std::numeric_limits<double>::infinity();
      std::int64_t best_j = kNone;
      for (std::int64_t j = 0; j < dst.count(); ++j) {
        if (!dst.row_valid(j)) continue;
        const double d =
            (src.descriptors.row(static_cast<std::int64_t>(i)) -
             dst.descriptors.row(j))
                .squaredNorm();
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      nn[i] = best_j;
    }
  });
  return nn;
}

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

std::vector<MatchCandidate> match_descriptors(const FeatureSet& src,
                                              const FeatureSet& dst,
                                              MatchMode mode) {
  bool any_src = false, any_dst = false;
  for (std::int64_t i = 0; i < src.count() && !any_src; ++i)
    any_src = src.row_valid(i);
  for (std::int64_t j = 0; j < dst.count() && !any_dst; ++j)
    any_dst = dst.row_valid(j);
  if (!any_src || !any_dst) throw NoValidDescriptors{};

  const auto fwd = nearest_rows(src, dst);
  std::vector<MatchCandidate> out;
  if (mode == MatchMode::kOneWay) {
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      if (fwd[i] == kNone) continue;
      const double d = (src.descriptors.row(static_cast<std::int64_t>(i)) -
                        dst.descriptors.row(fwd[i]))
                           .norm();
      out.push_back({static_cast<std::uint32_t>(i),
                     static_cast<std::uint32_t>(fwd[i]), d});
    }
    return out;
  }

  const auto bwd = nearest_rows(dst, src);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    if (fwd[i] == kNone) continue;
    if (bwd[static_cast<std::size_t>(fwd[i])] != static_cast<std::int64_t>(i))
      continue;
    const double d = (src.descriptors.row(static_cast<std::int64_t>(i)) -
                      dst.descriptors.row(fwd[i]))
                         .norm();
    out.push_back({static_cast<std::uint32_t>(i),
                   static_cast<std::uint32_t>(fwd[i]), d});
  }
  return out;
}

Pose kabsch_svd(std::span<const Eigen::Vector3d> src,
                std::span<const Eigen::Vector3d> dst) {
  if (src.size() != dst.size())
    throw std::invalid_argument("kabsch_svd: size mismatch");
  if (src.size() < 3) throw DegenerateConfiguration("fewer than 3 pairs");

  const auto n = static_cast<double>(src.size());
  Eigen::Vector3d c_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d c_dst = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    c_src += src[i];
    c_dst += dst[i];
  }
  c_src /= n;
  c_dst /= n;

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d a = src[i] - c_src;
    cross += a * (dst[i] - c_dst).transpose();
    scatter += a * a.transpose();
  }

  // Collinear sources leave rotation about the line unconstrained.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> spread(scatter);
  if (spread.eigenvalues()(1) <=
      1e-12 * std::max(spread.eigenvalues()(2), 1.0))
    throw DegenerateConfiguration("collinear source points");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose{r, c_dst - r * c_src};
}

RansacResult ransac_register(std::span<const MatchCandidate> candidates,
                             std::span<const Eigen::Vector3d> src_points,
                             std::span<const Eigen::Vector3d> dst_points,
                             const RansacParams& params) {
  if (candidates.size() < 3) throw TooFewCandidates{};
  if (!(params.confidence > 0.0 && params.confidence < 1.0))
    throw std::invalid_argument("ransac: confidence must be in (0, 1)");

  const std::size_t n = candidates.size();
  const double thr_sq = params.inlier_threshold * params.inlier_threshold;

  const auto count_inliers = [&](const Pose& pose) {
    std::size_t count = 0;
    for (const auto& c : candidates) {
      if ((pose.apply(src_points[c.src_index]) - dst_points[c.dst_index])
              .squaredNorm() <= thr_sq)
        ++count;
    }
    return count;
  };
  const auto collect_inliers = [&](const Pose& pose) {
    std::vector<std::uint32_t> inliers;
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto& c = candidates[k];
      if ((pose.apply(src_points[c.src_index]) - dst_points[c.dst_index])
              .squaredNorm() <= thr_sq)
        inliers.push_back(k);
    }
    return inliers;
  };
  const auto rms_over = [&](const Pose& pose,
                            const std::vector<std::uint32_t>& inliers) {
    if (inliers.empty()) return 0.0;
    double sum = 0.0;
    for (const auto k : inliers) {
      const auto& c = candidates[k];
      sum += (pose.apply(src_points[c.src_index]) - dst_points[c.dst_index])
                 .squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(inliers.size()));
  };

  // Hypotheses are drawn sequentially from the seeded RNG, scored in
  // parallel batches, and reduced in hypothesis order (best by count, then
  // lower index), so the result is reproducible for a fixed seed. Degenerate
  // samples count as spent iterations.
  struct Hypothesis {
    std::array<Eigen::Vector3d, 3> src;
    std::array<Eigen::Vector3d, 3> dst;
    Pose pose;
    std::size_t count = 0;
    bool valid = false;
  };

  Rng rng(params.seed);
  Pose best_pose;
  std::size_t best_count = 0;
  int iters = 0;
  double needed = static_cast<double>(params.max_iterations);
  constexpr int kBatch = 64;
  std::vector<Hypothesis> batch;

  while (iters < params.max_iterations && static_cast<double>(iters) < needed) {
    const int batch_size =
        std::min(kBatch, params.max_iterations - iters);
    batch.assign(static_cast<std::size_t>(batch_size), Hypothesis{});
    for (auto& hyp : batch) {
      const std::size_t a = rng.uniform_int(n);
      std::size_t b = rng.uniform_int(n - 1);
      if (b >= a) ++b;
      std::size_t c = rng.uniform_int(n - 2);
      if (c >= std::min(a, b)) ++c;
      if (c >= std::max(a, b)) ++c;
      hyp.src = {src_points[candidates[a].src_index],
                 src_points[candidates[b].src_index],
                 src_points[candidates[c].src_index]};
      hyp.dst = {dst_points[candidates[a].dst_index],
                 dst_points[candidates[b].dst_index],
                 dst_points[candidates[c].dst_index]};
    }

    parallel_for(batch.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t h = begin; h < end; ++h) {
        auto& hyp = batch[h];
        if (triangle_area(hyp.src[0], hyp.src[1], hyp.src[2]) <= 1e-6)
          continue;
        try {
          hyp.pose = kabsch_svd(hyp.src, hyp.dst);
        } catch (const DegenerateConfiguration&) {
          continue;
        }
        hyp.count = count_inliers(hyp.pose);
        hyp.valid = true;
      }
    });

    for (const auto& hyp : batch) {
      ++iters;
      if (!hyp.valid || hyp.count <= best_count) continue;
      best_count = hyp.count;
      best_pose = hyp.pose;
      const double w = static_cast<double>(hyp.count) / static_cast<double>(n);
      const double denom = std::log(1.0 - std::min(w * w * w, 1.0 - 1e-12));
      if (denom < 0.0)
        needed = std::ceil(std::log(1.0 - params.confidence) / denom);
    }
  }

  if (best_count < 3) throw NoConsensus{};

  // Refine over the raw model's inliers, then re-score once. Keep the raw
  // model if refinement did not improve the RMS over the final inlier set.
  const auto raw_inliers = collect_inliers(best_pose);
  std::vector<Eigen::Vector3d> in_src, in_dst;
  in_src.reserve(raw_inliers.size());
  in_dst.reserve(raw_inliers.size());
  for (const auto k : raw_inliers) {
    in_src.push_back(src_points[candidates[k].src_index]);
    in_dst.push_back(dst_points[candidates[k].dst_index]);
  }

  RansacResult result;
  result.iterations_run = iters;
  try {
    const Pose refined = kabsch_svd(in_src, in_dst);
    auto final_inliers = collect_inliers(refined);
    if (final_inliers.size() >= 3 &&
        rms_over(refined, final_inliers) <= rms_over(best_pose, final_inliers)) {
      result.pose = refined;
      result.inlier_indices = std::move(final_inliers);
      return result;
    }
  } catch (const DegenerateConfiguration&) {
    // fall through to the raw model
  }
  result.pose = best_pose;
  result.inlier_indices = raw_inliers;
  return result;
}

}  // namespace kelo
