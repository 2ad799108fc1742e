#include "kelo/odometry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "kelo/matching.hpp"
#include "kelo/threading.hpp"

namespace kelo {

PointCloud deskew(const PointCloud& scan, const Pose& relative_motion) {
  PointCloud out = scan;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double f = out.timestamps[i] - 1.0;
    if (f == 0.0) continue;  // scan-end points are bit-identical
    out.positions[i] =
        interpolate_pose(relative_motion, f).apply(scan.positions[i]);
  }
  return out;
}

PointCloud subsample_stage1(const PointCloud& cloud, double alpha_v) {
  if (!(alpha_v > 0.0))
    throw std::invalid_argument("subsample_stage1: voxel size <= 0");
  struct Slot {
    std::size_t index;
    double dist_sq;
  };
  std::unordered_map<VoxelKey, Slot, VoxelKeyHash> best;
  best.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const VoxelKey key = voxel_key_of(cloud.positions[i], alpha_v);
    const Eigen::Vector3d center{(key.x + 0.5) * alpha_v,
                                 (key.y + 0.5) * alpha_v,
                                 (key.z + 0.5) * alpha_v};
    const double d = (cloud.positions[i] - center).squaredNorm();
    auto [it, inserted] = best.try_emplace(key, Slot{i, d});
    if (!inserted && d < it->second.dist_sq) it->second = Slot{i, d};
  }
  std::vector<std::size_t> kept;
  kept.reserve(best.size());
  for (const auto& [key, slot] : best) kept.push_back(slot.index);
  std::sort(kept.begin(), kept.end());
  return select_points(cloud, kept);
}

PointCloud subsample_stage2(const PointCloud& cloud, double beta_v,
                            double keep_fraction, int k_salient) {
  if (!cloud.has_saliency()) throw MissingSaliency{};
  if (!(beta_v > 0.0))
    throw std::invalid_argument("subsample_stage2: voxel size <= 0");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("subsample_stage2: keep_fraction not in (0, 1]");
  if (k_salient < 1)
    throw std::invalid_argument("subsample_stage2: k_salient < 1");
  if (cloud.empty()) return cloud;

  // Global rank filter: drop the highest-sigma tail.
  const auto n = cloud.size();
  std::vector<std::size_t> by_sigma(n);
  std::iota(by_sigma.begin(), by_sigma.end(), 0);
  std::stable_sort(by_sigma.begin(), by_sigma.end(),
                   [&](std::size_t a, std::size_t b) {
                     return cloud.saliency[a] < cloud.saliency[b];
                   });
  const auto keep_count = static_cast<std::size_t>(
      std::ceil(keep_fraction * static_cast<double>(n)));

  // Bucket survivors; keep the k_salient most salient per voxel.
  struct Entry {
    std::size_t index;
    double sigma;
    double center_dist_sq;
  };
  std::unordered_map<VoxelKey, std::vector<Entry>, VoxelKeyHash> buckets;
  for (std::size_t r = 0; r < keep_count && r < n; ++r) {
    const std::size_t i = by_sigma[r];
    const VoxelKey key = voxel_key_of(cloud.positions[i], beta_v);
    const Eigen::Vector3d center{(key.x + 0.5) * beta_v, (key.y + 0.5) * beta_v,
                                 (key.z + 0.5) * beta_v};
    buckets[key].push_back(Entry{i, cloud.saliency[i],
                                 (cloud.positions[i] - center).squaredNorm()});
  }

  std::vector<std::size_t> kept;
  for (auto& [key, entries] : buckets) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.sigma != b.sigma) return a.sigma < b.sigma;
      if (a.center_dist_sq != b.center_dist_sq)
        return a.center_dist_sq < b.center_dist_sq;
      return a.index < b.index;
    });
    const auto take = std::min<std::size_t>(entries.size(),
                                            static_cast<std::size_t>(k_salient));
    for (std::size_t e = 0; e < take; ++e) kept.push_back(entries[e].index);
  }
  std::sort(kept.begin(), kept.end());
  return select_points(cloud, kept);
}

FeatureSet ExternalFeatureProvider::features_for(
    const PointCloud& raw_scan, const std::filesystem::path& scan_path) {
  std::filesystem::path sidecar = dir_ / scan_path.filename();
  sidecar.replace_extension(".kddf");
  return load_external_features(sidecar, raw_scan.size());
}

std::unique_ptr<FeatureProvider> make_feature_provider(
    const PipelineConfig& config, const std::filesystem::path& features_dir) {
  if (config.feature_provider == "external") {
    if (features_dir.empty())
      throw ConfigError("feature_provider = external needs a features directory");
    return std::make_unique<ExternalFeatureProvider>(features_dir);
  }
  BuiltinFeatureParams params;
  params.radius = config.feature_radius;
  params.bins = config.descriptor_dim;
  params.sigma_min = config.sigma_min;
  params.sigma_max = config.sigma_max;
  return std::make_unique<BuiltinFeatureProvider>(params);
}

Odometry::Odometry(const PipelineConfig& config)
    : config_(config),
      map_([&] {
        VoxelHashMap::Params p;
        p.voxel_size = config.voxel_size;
        p.n_max = config.n_max;
        p.min_point_spacing = config.min_point_spacing;
        p.surfel_fitting = config.surfel_fitting;
        p.epsilon_plane = config.epsilon_plane;
        p.rho_min = config.rho_min;
        return p;
      }()),
      threshold_(ThresholdParams{config.delta_min, config.tau_default,
                                 config.tau_floor}) {
  validate(config_);
}

Pose Odometry::process_scan(const PointCloud& raw_scan,
                            const FeatureSet& features) {
  if (raw_scan.empty())
    throw std::invalid_argument("process_scan: empty scan");
  if (static_cast<std::size_t>(features.count()) != raw_scan.size())
    throw std::invalid_argument("process_scan: feature count != point count");
  const auto t0 = std::chrono::steady_clock::now();
  diagnostics_ = ScanDiagnostics{};

  // Attach saliency and feature-row channels to the working cloud.
  PointCloud scan = raw_scan;
  scan.saliency.resize(scan.size());
  scan.feature_indices.resize(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    scan.saliency[i] = features.saliency(static_cast<std::int64_t>(i));
    scan.feature_indices[i] = static_cast<std::uint32_t>(i);
  }

  scan = crop_by_range(scan, config_.min_range, config_.max_range);
  scan = deskew(scan, last_relative_);

  const PointCloud stage1 =
      subsample_stage1(scan, config_.alpha * config_.voxel_size);
  const PointCloud keypoints =
      subsample_stage2(stage1, config_.beta * config_.voxel_size,
                       config_.keep_fraction, config_.k_salient);
  const FeatureSet kp_features =
      gather_features(features, keypoints.feature_indices);
  diagnostics_.keypoints = keypoints.size();

  Pose refined;  // identity for the first scan
  if (!trajectory_.empty()) {
    // Scan-to-scan initial guess; constant velocity on any matching failure.
    Pose t_rel = last_relative_;
    if (!prev_keypoints_.empty()) {
      try {
        const auto mode = config_.match_mode == "one_way" ? MatchMode::kOneWay
                                                          : MatchMode::kMutual;
        const auto candidates =
            match_descriptors(kp_features, prev_features_, mode);
        RansacParams rp;
        rp.max_iterations = config_.ransac_max_iterations;
        rp.inlier_threshold = config_.ransac_inlier_threshold;
        rp.confidence = config_.ransac_confidence;
        rp.seed = config_.seed;
        const auto rr = ransac_register(candidates, keypoints.positions,
                                        prev_keypoints_.positions, rp);
        t_rel = rr.pose;
        diagnostics_.ransac_succeeded = true;
      } catch (const NoValidDescriptors&) {
      } catch (const TooFewCandidates&) {
      } catch (const NoConsensus&) {
      }
    }

    const Pose guess = compose(trajectory_.back(), t_rel);
    try {
      IcpParams icp;
      icp.epsilon_conv = config_.icp_epsilon_conv;
      icp.max_iters = config_.icp_max_iters;
      const auto result =
          register_scan_to_map(keypoints, map_, guess, threshold_, icp);
      refined = result.pose;
      diagnostics_.icp_iterations = static_cast<int>(result.iterations.size());
      if (!result.iterations.empty())
        diagnostics_.correspondences = static_cast<std::size_t>(
            result.iterations.back().correspondences);
    } catch (const NoCorrespondences&) {
      refined = guess;  // keep the scan-to-scan estimate
    }

    threshold_ = update_threshold(threshold_, compose(inverse(guess), refined),
                                  config_.max_range);
  }

  const PointCloud world_points = transform_cloud(stage1, refined);
  map_.insert_points(world_points.positions, refined.translation);
  map_.prune_beyond(refined.translation, config_.max_range);

  if (!trajectory_.empty())
    last_relative_ = compose(inverse(trajectory_.back()), refined);
  trajectory_.push_back(refined);
  prev_keypoints_ = keypoints;
  prev_features_ = kp_features;

  diagnostics_.map_memory_bytes = map_.memory_usage().total_bytes();
  diagnostics_.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                t0)
          .count();
  return refined;
}

RunResult run_sequence(const PipelineConfig& config, const ScanSource& source,
                       FeatureProvider& provider) {
  if (source.paths.empty())
    throw std::invalid_argument("run_sequence: no scans");
  validate(config);
  set_thread_cap(config.threads);

  Odometry odometry(config);
  RunResult result;
  result.report.per_scan.reserve(source.paths.size());
  for (std::size_t i = 0; i < source.paths.size(); ++i) {
    const auto& path = source.paths[i];
    PointCloud raw;
    FeatureSet features;
    try {
      raw = read_scan_bin(path);
      features = provider.features_for(raw, path);
    } catch (const std::exception& err) {
      throw IoFailure("scan " + std::to_string(i) + " (" + path.string() +
                      "): " + err.what());
    }
    try {
      odometry.process_scan(raw, features);
    } catch (const std::exception& err) {
      throw PipelineError(i, err.what());
    }
    result.report.per_scan.push_back(odometry.last_diagnostics());
  }

  result.trajectory = odometry.trajectory();
  double wall = 0.0, memory = 0.0;
  for (const auto& s : result.report.per_scan) {
    wall += s.wall_ms;
    memory += static_cast<double>(s.map_memory_bytes);
  }
  const auto n = static_cast<double>(result.report.per_scan.size());
  result.report.mean_wall_ms = wall / n;
  result.report.mean_memory_bytes = memory / n;
  return result;
}

}  // namespace kelo
