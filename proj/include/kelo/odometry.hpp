/**
 * \file odometry.hpp
 * \brief Pipeline orchestration: deskewing, two-stage subsampling,
 *        descriptor-RANSAC scan-to-scan guess, scan-to-map refinement,
 *        map update, trajectory accumulation.
 */
#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <vector>

#include "kelo/cloud.hpp"
#include "kelo/config.hpp"
#include "kelo/features.hpp"
#include "kelo/geometry.hpp"
#include "kelo/icp.hpp"
#include "kelo/io.hpp"
#include "kelo/voxel_map.hpp"

namespace kelo {

/// Motion-compensates a scan under the constant velocity model: a point with
/// timestamp s is moved by the fractional pose interpolate_pose(motion, s-1),
/// so scan-end points (s = 1) stay put and earlier points are corrected
/// forward.
PointCloud deskew(const PointCloud& scan, const Pose& relative_motion);

/// Voxel grid subsampling at size alpha_v keeping one original point per
/// occupied voxel: the member nearest the voxel center (never a centroid).
PointCloud subsample_stage1(const PointCloud& cloud, double alpha_v);

struct MissingSaliency : std::runtime_error {
  MissingSaliency()
      : std::runtime_error("stage-2 subsampling needs a saliency channel") {}
};

/// Saliency-aware keypoint subsampling: the globally least salient
/// (1 - keep_fraction) tail is discarded by sigma rank, then survivors are
/// bucketed at beta_v and each voxel keeps up to k_salient points ordered by
/// ascending sigma (nearest voxel center, then lowest index, as tie-breaks).
PointCloud subsample_stage2(const PointCloud& cloud, double beta_v,
                            double keep_fraction, int k_salient);

/// Per-point feature source for the pipeline. Implementations must be
/// callable concurrently for distinct clouds.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  /// Features for a raw scan, one row per point. scan_path identifies the
  /// scan for sidecar lookup; it may be empty for in-memory scans.
  virtual FeatureSet features_for(const PointCloud& raw_scan,
                                  const std::filesystem::path& scan_path) = 0;
};

class BuiltinFeatureProvider final : public FeatureProvider {
 public:
  explicit BuiltinFeatureProvider(const BuiltinFeatureParams& params)
      : params_(params) {}
  FeatureSet features_for(const PointCloud& raw_scan,
                          const std::filesystem::path&) override {
    return compute_builtin_features(raw_scan, params_);
  }

 private:
  BuiltinFeatureParams params_;
};

/// Loads <stem>.kddf sidecars from a directory, one per scan file.
class ExternalFeatureProvider final : public FeatureProvider {
 public:
  explicit ExternalFeatureProvider(std::filesystem::path dir)
      : dir_(std::move(dir)) {}
  FeatureSet features_for(const PointCloud& raw_scan,
                          const std::filesystem::path& scan_path) override;

 private:
  std::filesystem::path dir_;
};

std::unique_ptr<FeatureProvider> make_feature_provider(
    const PipelineConfig& config,
    const std::filesystem::path& features_dir = {});

struct ScanDiagnostics {
  double wall_ms = 0.0;
  int icp_iterations = 0;
  std::size_t correspondences = 0;
  std::size_t map_memory_bytes = 0;
  std::size_t keypoints = 0;
  bool ransac_succeeded = false;
};

/// State-carrying fold over scans. Owns the trajectory, the constant
/// velocity prior, the adaptive threshold state, and the map.
class Odometry {
 public:
  explicit Odometry(const PipelineConfig& config);

  /// Runs one scan through the pipeline and returns its world pose.
  /// features must have one row per raw scan point.
  Pose process_scan(const PointCloud& raw_scan, const FeatureSet& features);

  const std::vector<Pose>& trajectory() const { return trajectory_; }
  const Pose& last_relative() const { return last_relative_; }
  const VoxelHashMap& map() const { return map_; }
  const ThresholdState& threshold_state() const { return threshold_; }
  const ScanDiagnostics& last_diagnostics() const { return diagnostics_; }

 private:
  PipelineConfig config_;
  VoxelHashMap map_;
  ThresholdState threshold_;
  std::vector<Pose> trajectory_;
  Pose last_relative_;
  PointCloud prev_keypoints_;
  FeatureSet prev_features_;
  ScanDiagnostics diagnostics_;
};

struct RunReport {
  std::vector<ScanDiagnostics> per_scan;
  double mean_wall_ms = 0.0;
  double mean_memory_bytes = 0.0;
};

/// Non-IO failure inside the fold, tagged with the offending scan.
struct PipelineError : std::runtime_error {
  PipelineError(std::size_t index, const std::string& what)
      : std::runtime_error("scan " + std::to_string(index) + ": " + what),
        scan_index(index) {}
  std::size_t scan_index;
};

struct RunResult {
  std::vector<Pose> trajectory;
  RunReport report;
};

/// Folds process_scan over the scan source. IO errors are rethrown with the
/// scan index and path prepended.
RunResult run_sequence(const PipelineConfig& config, const ScanSource& source,
                       FeatureProvider& provider);

}  // namespace kelo
