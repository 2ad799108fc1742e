/**
 * \file cloud.hpp
 * \brief Point cloud container with per-point timestamps and optional
 *        attribute channels (saliency, feature row indices).
 *
 * Attribute channels are parallel arrays keyed by point index so stages can
 * add channels without copying positions. Clouds are treated as immutable
 * once built: every operation returns a new cloud.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "kelo/geometry.hpp"

namespace kelo {

struct Point {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double timestamp = 1.0;  // normalized within-scan time, in [0, 1]
  double intensity = 0.0;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> timestamps;   // same size as positions
  std::vector<double> intensities;  // same size as positions
  // Optional channels: empty, or one entry per point.
  std::vector<double> saliency;                 // sigma_i, all > 0
  std::vector<std::uint32_t> feature_indices;   // rows into a FeatureSet

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool has_saliency() const { return !saliency.empty(); }
  bool has_feature_indices() const { return !feature_indices.empty(); }

  void push_back(const Point& p) {
    positions.push_back(p.position);
    timestamps.push_back(p.timestamp);
    intensities.push_back(p.intensity);
  }

  void reserve(std::size_t n) {
    positions.reserve(n);
    timestamps.reserve(n);
    intensities.reserve(n);
  }
};

/// Cloud with every point at the given positions, timestamps all 1.0
/// (scan-end convention) and zero intensity.
PointCloud cloud_from_positions(std::span<const Eigen::Vector3d> positions);

/// Gathers the listed points (all channels) into a new cloud, in the
/// given order.
PointCloud select_points(const PointCloud& cloud,
                         std::span<const std::size_t> indices);

/// Maps every position by the pose; all attribute channels are preserved.
PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

/// Keeps points with min_r <= ||p|| <= max_r, order preserved.
/// Requires 0 <= min_r < max_r.
PointCloud crop_by_range(const PointCloud& cloud, double min_r, double max_r);

}  // namespace kelo
