/**
 * \file matching.hpp
 * \brief Descriptor-space correspondences and RANSAC rigid registration.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kelo/features.hpp"
#include "kelo/geometry.hpp"

namespace kelo {

struct MatchCandidate {
  std::uint32_t src_index = 0;
  std::uint32_t dst_index = 0;
  double desc_distance = 0.0;
};

enum class MatchMode { kMutual, kOneWay };

struct NoValidDescriptors : std::runtime_error {
  NoValidDescriptors()
      : std::runtime_error("no valid descriptors to match") {}
};
struct DegenerateConfiguration : std::runtime_error {
  explicit DegenerateConfiguration(const std::string& what)
      : std::runtime_error("degenerate point configuration: " + what) {}
};
struct TooFewCandidates : std::runtime_error {
  TooFewCandidates() : std::runtime_error("RANSAC needs >= 3 candidates") {}
};
struct NoConsensus : std::runtime_error {
  NoConsensus() : std::runtime_error("RANSAC found no 3-inlier consensus") {}
};

/// Exhaustive nearest-neighbor matching in descriptor space. Mutual mode
/// keeps reciprocal nearest neighbors only; ties break to the lower index.
/// Rows flagged unmatched (zero descriptor) are excluded on both sides.
std::vector<MatchCandidate> match_descriptors(const FeatureSet& src,
                                              const FeatureSet& dst,
                                              MatchMode mode);

/// Least-squares rigid alignment of paired points (minimizes
/// sum ||R p_i + t - q_i||^2), det(R) = +1 enforced by sign correction.
/// Throws DegenerateConfiguration for < 3 pairs or collinear sources.
Pose kabsch_svd(std::span<const Eigen::Vector3d> src,
                std::span<const Eigen::Vector3d> dst);

struct RansacParams {
  int max_iterations = 50000;
  double inlier_threshold = 0.6;  // meters
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Pose pose;
  std::vector<std::uint32_t> inlier_indices;  // into the candidate list
  int iterations_run = 0;
};

/// 3-sample RANSAC over candidate correspondences with SVD refinement over
/// the inliers of the best model and one re-scoring pass. Deterministic for
/// a fixed seed, candidate order and thresholds.
RansacResult ransac_register(std::span<const MatchCandidate> candidates,
                             std::span<const Eigen::Vector3d> src_points,
                             std::span<const Eigen::Vector3d> dst_points,
                             const RansacParams& params);

}  // namespace kelo
