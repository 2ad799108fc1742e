/**
 * \file voxel_map.hpp
 * \brief Sparse voxel hash map holding raw points (capped) or fitted surfels,
 *        plus an uncapped point-index grid for radius searches.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <variant>
#include <vector>

namespace kelo {

struct VoxelKey {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // Large-prime mixing, the usual spatial hash.
    const std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ull ^
                            static_cast<std::uint64_t>(k.y) * 19349669ull ^
                            static_cast<std::uint64_t>(k.z) * 83492791ull;
    return static_cast<std::size_t>(h);
  }
};

VoxelKey voxel_key_of(const Eigen::Vector3d& p, double voxel_size);

/// Planar patch replacing a full voxel: the stored point closest to the voxel
/// center, the plane normal, and radius equal to the voxel size.
struct Surfel {
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double radius = 0.0;
};

struct InsertionReport {
  std::size_t added = 0;
  std::size_t rejected_full = 0;
  std::size_t rejected_surfel = 0;
  std::size_t rejected_duplicate = 0;  // closer than min_point_spacing
};

struct SurfelFitOutcome {
  bool fitted = false;
  double rms_residual = 0.0;   // point-to-plane RMS of the regression
  double planarity = 0.0;      // (lambda2 - lambda3) / lambda1
};

/// Accounted bytes: 12 per raw point, 28 per surfel (anchor 3, normal 3,
/// radius 1, float32 each), plus a fixed 16-byte overhead per occupied voxel
/// (12-byte integer key + 4-byte content tag).
struct MapMemory {
  std::size_t payload_bytes = 0;
  std::size_t overhead_bytes = 0;
  std::size_t voxel_count = 0;
  std::size_t total_bytes() const { return payload_bytes + overhead_bytes; }
};

struct NoSuchVoxel : std::runtime_error {
  NoSuchVoxel() : std::runtime_error("no such voxel") {}
};
struct VoxelNotFull : std::runtime_error {
  VoxelNotFull() : std::runtime_error("voxel does not hold exactly n_max points") {}
};

class VoxelHashMap {
 public:
  struct Params {
    double voxel_size = 1.0;
    int n_max = 20;
    double min_point_spacing = 0.1;  // duplicate rejection inside a voxel
    bool surfel_fitting = true;      // fit eagerly when a voxel fills
    double epsilon_plane = 0.05;     // max RMS plane residual, meters
    double rho_min = 0.75;           // min planarity (l2 - l3) / l1
  };

  static constexpr std::size_t kPointBytes = 12;
  static constexpr std::size_t kSurfelBytes = 28;
  static constexpr std::size_t kVoxelOverheadBytes = 16;

  VoxelHashMap() : VoxelHashMap(Params{}) {}
  explicit VoxelHashMap(const Params& params);

  /// Appends each point to its voxel unless the voxel is full, already a
  /// surfel, or the point is within min_point_spacing of a stored one.
  /// When surfel fitting is enabled, a voxel that just reached n_max points
  /// is fitted immediately; sensor_origin fixes the normal sign.
  InsertionReport insert_points(
      std::span<const Eigen::Vector3d> points,
      const Eigen::Vector3d& sensor_origin = Eigen::Vector3d::Zero());

  /// Total-least-squares plane fit of a full voxel. Replaces the contents
  /// with a surfel when rms <= epsilon_plane and planarity >= rho_min.
  /// Throws NoSuchVoxel / VoxelNotFull.
  SurfelFitOutcome try_fit_surfel(
      const VoxelKey& key,
      const Eigen::Vector3d& sensor_origin = Eigen::Vector3d::Zero());

  /// Exact nearest raw point within max_dist, or nullopt.
  std::optional<std::pair<Eigen::Vector3d, double>> nearest_point(
      const Eigen::Vector3d& query, double max_dist) const;

  /// Exact nearest surfel by anchor distance within max_dist, or nullopt.
  std::optional<std::pair<Surfel, double>> nearest_surfel(
      const Eigen::Vector3d& query, double max_dist) const;

  /// Removes voxels whose center is farther than max_range from center.
  std::size_t prune_beyond(const Eigen::Vector3d& center, double max_range);

  MapMemory memory_usage() const;

  /// One record per line: "P x y z" for points, "S x y z nx ny nz r" for
  /// surfels, ordered by voxel key for reproducible output.
  void export_text(std::ostream& os) const;

  bool empty() const { return voxels_.empty(); }
  std::size_t voxel_count() const { return voxels_.size(); }
  std::size_t point_count() const;
  std::size_t surfel_count() const;
  const Params& params() const { return params_; }

  using PointList = std::vector<Eigen::Vector3d>;
  using Contents = std::variant<PointList, Surfel>;

  /// Read-only voxel access for tests and export.
  const std::unordered_map<VoxelKey, Contents, VoxelKeyHash>& voxels() const {
    return voxels_;
  }

 private:
  SurfelFitOutcome fit_voxel(const VoxelKey& key, PointList& pts,
                             const Eigen::Vector3d& sensor_origin);
  Eigen::Vector3d voxel_center(const VoxelKey& key) const;

  Params params_;
  std::unordered_map<VoxelKey, Contents, VoxelKeyHash> voxels_;
};

/// Uncapped voxel-bucket index over an external position array; used for
/// exact radius and nearest-neighbor queries during feature extraction and
/// correspondence construction.
class PointGrid {
 public:
  PointGrid(std::span<const Eigen::Vector3d> points, double cell_size);

  /// Indices of all points with ||p - query|| <= radius, ascending.
  std::vector<std::uint32_t> neighbors_within(const Eigen::Vector3d& query,
                                              double radius) const;

  /// Exact nearest point within max_dist; ties break to the lower index.
  std::optional<std::pair<std::uint32_t, double>> nearest(
      const Eigen::Vector3d& query, double max_dist) const;

 private:
  std::span<const Eigen::Vector3d> points_;
  double cell_size_;
  std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> cells_;
};

}  // namespace kelo
