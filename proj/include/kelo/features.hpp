/**
 * \file features.hpp
 * \brief Per-point descriptors and saliency uncertainty.
 *
 * Two providers share the FeatureSet contract: a built-in hand-crafted
 * descriptor computed from local covariance statistics, and a loader for
 * precomputed features stored in a binary sidecar file.
 *
 * Sidecar layout (little-endian, normative):
 *   magic "KDDF" (4 bytes), version u32 = 1, point count u32 = N,
 *   descriptor dim u32 = D, then N records of (D float32, 1 float32 saliency).
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "kelo/cloud.hpp"

namespace kelo {

inline constexpr char kFeatureMagic[4] = {'K', 'D', 'D', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

/// Row i holds the descriptor of point i (unit L2 norm), saliency(i) holds
/// its uncertainty sigma_i > 0. A zero descriptor row flags a point that
/// could not be described (insufficient neighborhood); flagged rows are
/// excluded from matching but the point remains usable as geometry.
struct FeatureSet {
  Eigen::MatrixXd descriptors;  // N x D
  Eigen::VectorXd saliency;     // N

  std::int64_t count() const { return descriptors.rows(); }
  std::int64_t dim() const { return descriptors.cols(); }
  bool row_valid(std::int64_t i) const {
    return descriptors.row(i).squaredNorm() > 0.25;
  }
};

/// Gathers the listed rows into a new FeatureSet.
FeatureSet gather_features(const FeatureSet& fs,
                           std::span<const std::uint32_t> rows);

struct LocalFrameStats {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // sorted descending
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();      // faces the origin
};

struct InsufficientNeighbors : std::runtime_error {
  explicit InsufficientNeighbors(std::size_t got)
      : std::runtime_error("local_stats: neighborhood has " +
                           std::to_string(got) + " points, need >= 5") {}
};

/// Centroid and covariance eigendecomposition of the radius-neighborhood of
/// point center_index (the point itself included). The normal is the
/// smallest-eigenvalue direction, oriented toward the sensor origin.
/// Throws InsufficientNeighbors below 5 points.
LocalFrameStats local_stats(const PointCloud& cloud, std::size_t center_index,
                            double radius);

struct BuiltinFeatureParams {
  double radius = 1.0;
  int bins = 32;           // total descriptor dimension
  double sigma_min = 0.05;
  double sigma_max = 1.0;
  int max_normal_pairs = 64;
};

/// Hand-crafted rotation-invariant descriptor: three concatenated histograms
/// (center-to-neighbor normal cosine, neighbor distance / radius, pairwise
/// neighbor-normal cosine), L2-normalized. Saliency is mapped from the
/// neighborhood planarity (lambda2 - lambda3)/lambda1: planar -> sigma_max
/// (non-salient), edges and corners -> sigma_min.
/// Points with fewer than 5 neighbors get a zero descriptor and sigma_max.
FeatureSet compute_builtin_features(const PointCloud& cloud,
                                    const BuiltinFeatureParams& params);

struct CountMismatch : std::runtime_error {
  CountMismatch(std::size_t file_n, std::size_t expected)
      : std::runtime_error("feature sidecar holds " + std::to_string(file_n) +
                           " records, paired cloud has " +
                           std::to_string(expected)) {}
};
struct MalformedHeader : std::runtime_error {
  explicit MalformedHeader(const std::string& what)
      : std::runtime_error("malformed feature sidecar header: " + what) {}
};
struct TruncatedPayload : std::runtime_error {
  TruncatedPayload()
      : std::runtime_error("feature sidecar payload truncated or padded") {}
};

/// Reads a sidecar file. Rows whose norm deviates from 1 by more than 1e-3
/// are re-normalized with a warning on stderr; zero rows stay zero (flagged
/// unmatched). When expected_count is given, a differing record count throws
/// CountMismatch.
FeatureSet load_external_features(
    const std::filesystem::path& path,
    std::optional<std::size_t> expected_count = std::nullopt);

}  // namespace kelo
