#include "kelo/cloud.hpp"

#include <cassert>
#include <stdexcept>

namespace kelo {

PointCloud cloud_from_positions(std::span<const Eigen::Vector3d> positions) {
  PointCloud out;
  out.positions.assign(positions.begin(), positions.end());
  out.timestamps.assign(positions.size(), 1.0);
  out.intensities.assign(positions.size(), 0.0);
  return out;
}

PointCloud select_points(const PointCloud& cloud,
                         std::span<const std::size_t> indices) {
  PointCloud out;
  out.reserve(indices.size());
  if (cloud.has_saliency()) out.saliency.reserve(indices.size());
  if (cloud.has_feature_indices()) out.feature_indices.reserve(indices.size());
  for (std::size_t i : indices) {
    assert(i < cloud.size());
    out.positions.push_back(cloud.positions[i]);
    out.timestamps.push_back(cloud.timestamps[i]);
    out.intensities.push_back(cloud.intensities[i]);
    if (cloud.has_saliency()) out.saliency.push_back(cloud.saliency[i]);
    if (cloud.has_feature_indices())
      out.feature_indices.push_back(cloud.feature_indices[i]);
  }
  return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (auto& p : out.positions) p = pose.apply(p);
  return out;
}

PointCloud crop_by_range(const PointCloud& cloud, double min_r, double max_r) {
  if (!(min_r >= 0.0) || !(min_r < max_r))
    throw std::invalid_argument("crop_by_range: need 0 <= min_r < max_r");
  std::vector<std::size_t> kept;
  kept.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double r = cloud.positions[i].norm();
    if (r >= min_r && r <= max_r) kept.push_back(i);
  }
  return select_points(cloud, kept);
}

}  // namespace kelo
