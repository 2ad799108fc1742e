#include "kelo/voxel_map.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace kelo {

VoxelKey voxel_key_of(const Eigen::Vector3d& p, double voxel_size) {
  return VoxelKey{static_cast<std::int32_t>(std::floor(p.x() / voxel_size)),
                  static_cast<std::int32_t>(std::floor(p.y() / voxel_size)),
                  static_cast<std::int32_t>(std::floor(p.z() / voxel_size))};
}

VoxelHashMap::VoxelHashMap(const Params& params) : params_(params) {}

Eigen::Vector3d VoxelHashMap::voxel_center(const VoxelKey& key) const {
  const double v = params_.voxel_size;
  return {(key.x + 0.5) * v, (key.y + 0.5) * v, (key.z + 0.5) * v};
}

InsertionReport VoxelHashMap::insert_points(
    std::span<const Eigen::Vector3d> points,
    const Eigen::Vector3d& sensor_origin) {
  InsertionReport report;
  const double spacing_sq =
      params_.min_point_spacing * params_.min_point_spacing;
  for (const auto& p : points) {
    const VoxelKey key = voxel_key_of(p, params_.voxel_size);
    auto [it, inserted] = voxels_.try_emplace(key, PointList{});
    if (std::holds_alternative<Surfel>(it->second)) {
      ++report.rejected_surfel;
      continue;
    }
    auto& list = std::get<PointList>(it->second);
    if (list.size() >= static_cast<std::size_t>(params_.n_max)) {
      ++report.rejected_full;
      continue;
    }
    bool duplicate = false;
    for (const auto& q : list) {
      if ((p - q).squaredNorm() < spacing_sq) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++report.rejected_duplicate;
      continue;
    }
    list.push_back(p);
    ++report.added;
    if (params_.surfel_fitting &&
        list.size() == static_cast<std::size_t>(params_.n_max)) {
      fit_voxel(key, list, sensor_origin);
    }
  }
  return report;
}

SurfelFitOutcome VoxelHashMap::fit_voxel(const VoxelKey& key, PointList& pts,
                                         const Eigen::Vector3d& sensor_origin) {
  const std::size_t n = pts.size();
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  const double l1 = evals(2), l2 = evals(1), l3 = std::max(evals(0), 0.0);

  SurfelFitOutcome out;
  out.rms_residual = std::sqrt(l3);
  out.planarity = l1 > 0.0 ? (l2 - l3) / l1 : 0.0;
  if (out.rms_residual > params_.epsilon_plane ||
      out.planarity < params_.rho_min) {
    return out;
  }

  const Eigen::Vector3d center = voxel_center(key);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pts[i] - center).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }

  Eigen::Vector3d normal = eig.eigenvectors().col(0).normalized();
  const Eigen::Vector3d anchor = pts[best];
  if (normal.dot(sensor_origin - anchor) < 0.0) normal = -normal;

  voxels_[key] = Surfel{anchor, normal, params_.voxel_size};
  out.fitted = true;
  return out;
}

SurfelFitOutcome VoxelHashMap::try_fit_surfel(
    const VoxelKey& key, const Eigen::Vector3d& sensor_origin) {
  auto it = voxels_.find(key);
  if (it == voxels_.end()) throw NoSuchVoxel{};
  if (!std::holds_alternative<PointList>(it->second)) throw VoxelNotFull{};
  auto& pts = std::get<PointList>(it->second);
  if (pts.size() != static_cast<std::size_t>(params_.n_max))
    throw VoxelNotFull{};
  return fit_voxel(key, pts, sensor_origin);
}

std::optional<std::pair<Eigen::Vector3d, double>> VoxelHashMap::nearest_point(
    const Eigen::Vector3d& query, double max_dist) const {
  const double v = params_.voxel_size;
  const int rings = static_cast<int>(std::ceil(max_dist / v));
  const VoxelKey c = voxel_key_of(query, v);

  const Eigen::Vector3d* best = nullptr;
  double best_sq = max_dist * max_dist;
  for (int dx = -rings; dx <= rings; ++dx)
    for (int dy = -rings; dy <= rings; ++dy)
      for (int dz = -rings; dz <= rings; ++dz) {
        const auto it = voxels_.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == voxels_.end()) continue;
        const auto* list = std::get_if<PointList>(&it->second);
        if (!list) continue;
        for (const auto& p : *list) {
          const double d = (p - query).squaredNorm();
          if (d <= best_sq && (!best || d < best_sq)) {
            best_sq = d;
            best = &p;
          }
        }
      }
  if (!best) return std::nullopt;
  return std::make_pair(*best, std::sqrt(best_sq));
}

std::optional<std::pair<Surfel, double>> VoxelHashMap::nearest_surfel(
    const Eigen::Vector3d& query, double max_dist) const {
  const double v = params_.voxel_size;
  const int rings = static_cast<int>(std::ceil(max_dist / v));
  const VoxelKey c = voxel_key_of(query, v);

  const Surfel* best = nullptr;
  double best_sq = max_dist * max_dist;
  for (int dx = -rings; dx <= rings; ++dx)
    for (int dy = -rings; dy <= rings; ++dy)
      for (int dz = -rings; dz <= rings; ++dz) {
        const auto it = voxels_.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == voxels_.end()) continue;
        const auto* s = std::get_if<Surfel>(&it->second);
        if (!s) continue;
        const double d = (s->anchor - query).squaredNorm();
        if (d <= best_sq && (!best || d < best_sq)) {
          best_sq = d;
          best = s;
        }
      }
  if (!best) return std::nullopt;
  return std::make_pair(*best, std::sqrt(best_sq));
}

std::size_t VoxelHashMap::prune_beyond(const Eigen::Vector3d& center,
                                       double max_range) {
  std::size_t removed = 0;
  for (auto it = voxels_.begin(); it != voxels_.end();) {
    if ((voxel_center(it->first) - center).norm() > max_range) {
      it = voxels_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

MapMemory VoxelHashMap::memory_usage() const {
  MapMemory mem;
  mem.voxel_count = voxels_.size();
  mem.overhead_bytes = voxels_.size() * kVoxelOverheadBytes;
  for (const auto& [key, contents] : voxels_) {
    if (const auto* list = std::get_if<PointList>(&contents)) {
      mem.payload_bytes += list->size() * kPointBytes;
    } else {
      mem.payload_bytes += kSurfelBytes;
    }
  }
  return mem;
}

std::size_t VoxelHashMap::point_count() const {
  std::size_t n = 0;
  for (const auto& [key, contents] : voxels_)
    if (const auto* list = std::get_if<PointList>(&contents)) n += list->size();
  return n;
}

std::size_t VoxelHashMap::surfel_count() const {
  std::size_t n = 0;
  for (const auto& [key, contents] : voxels_)
    if (std::holds_alternative<Surfel>(contents)) ++n;
  return n;
}

void VoxelHashMap::export_text(std::ostream& os) const {
  std::vector<const std::pair<const VoxelKey, Contents>*> ordered;
  ordered.reserve(voxels_.size());
  for (const auto& kv : voxels_) ordered.push_back(&kv);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    const VoxelKey &ka = a->first, &kb = b->first;
    if (ka.x != kb.x) return ka.x < kb.x;
    if (ka.y != kb.y) return ka.y < kb.y;
    return ka.z < kb.z;
  });

  char line[256];
  for (const auto* kv : ordered) {
    if (const auto* list = std::get_if<PointList>(&kv->second)) {
      for (const auto& p : *list) {
        std::snprintf(line, sizeof(line), "P %.17g %.17g %.17g\n", p.x(),
                      p.y(), p.z());
        os << line;
      }
    } else {
      const auto& s = std::get<Surfel>(kv->second);
      std::snprintf(line, sizeof(line), "S %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                    s.anchor.x(), s.anchor.y(), s.anchor.z(), s.normal.x(),
                    s.normal.y(), s.normal.z(), s.radius);
      os << line;
    }
  }
}

PointGrid::PointGrid(std::span<const Eigen::Vector3d> points, double cell_size)
    : points_(points), cell_size_(cell_size) {
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    cells_[voxel_key_of(points[i], cell_size_)].push_back(i);
  }
}

std::vector<std::uint32_t> PointGrid::neighbors_within(
    const Eigen::Vector3d& query, double radius) const {
  std::vector<std::uint32_t> out;
  const int rings = static_cast<int>(std::ceil(radius / cell_size_));
  const VoxelKey c = voxel_key_of(query, cell_size_);
  const double r_sq = radius * radius;
  for (int dx = -rings; dx <= rings; ++dx)
    for (int dy = -rings; dy <= rings; ++dy)
      for (int dz = -rings; dz <= rings; ++dz) {
        const auto it = cells_.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == cells_.end()) continue;
        for (std::uint32_t i : it->second) {
          if ((points_[i] - query).squaredNorm() <= r_sq) out.push_back(i);
        }
      }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::pair<std::uint32_t, double>> PointGrid::nearest(
    const Eigen::Vector3d& query, double max_dist) const {
  const int rings = static_cast<int>(std::ceil(max_dist / cell_size_));
  const VoxelKey c = voxel_key_of(query, cell_size_);
  std::uint32_t best = 0;
  double best_sq = max_dist * max_dist;
  bool found = false;
  for (int dx = -rings; dx <= rings; ++dx)
    for (int dy = -rings; dy <= rings; ++dy)
      for (int dz = -rings; dz <= rings; ++dz) {
        const auto it = cells_.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == cells_.end()) continue;
        for (std::uint32_t i : it->second) {
          const double d = (points_[i] - query).squaredNorm();
          if (d < best_sq || (!found && d <= best_sq) ||
              (d == best_sq && found && i < best)) {
            best_sq = d;
            best = i;
            found = true;
          }
        }
      }
  if (!found) return std::nullopt;
  return std::make_pair(best, std::sqrt(best_sq));
}

}  // namespace kelo
