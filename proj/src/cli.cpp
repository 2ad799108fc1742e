#include "kelo/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "kelo/config.hpp"
#include "kelo/eval.hpp"
#include "kelo/io.hpp"
#include "kelo/matchability.hpp"
#include "kelo/matching.hpp"
#include "kelo/odometry.hpp"
#include "kelo/threading.hpp"

namespace kelo {

namespace {

std::string pose_line(const Pose& p) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                p.rotation(0, 0), p.rotation(0, 1), p.rotation(0, 2),
                p.translation(0), p.rotation(1, 0), p.rotation(1, 1),
                p.rotation(1, 2), p.translation(1), p.rotation(2, 0),
                p.rotation(2, 1), p.rotation(2, 2), p.translation(2));
  return buf;
}

const std::map<std::string, std::string>& key_descriptions() {
  static const std::map<std::string, std::string> desc = {
      {"voxel_size", "map voxel edge length v, meters"},
      {"n_max", "raw-point cap per voxel"},
      {"min_point_spacing", "duplicate rejection distance inside a voxel"},
      {"surfel_fitting", "fit full voxels to surfels (true/false)"},
      {"epsilon_plane", "max plane-fit RMS residual for surfel acceptance"},
      {"rho_min", "min planarity for surfel acceptance"},
      {"alpha", "stage-1 subsampling voxel factor, (0,1]"},
      {"beta", "stage-2 subsampling voxel factor, [1,2]"},
      {"keep_fraction", "fraction of points surviving the saliency rank filter"},
      {"k_salient", "points kept per stage-2 voxel"},
      {"min_range", "range crop lower bound, meters"},
      {"max_range", "range crop upper bound / map extent, meters"},
      {"feature_provider", "builtin | external"},
      {"feature_radius", "built-in descriptor neighborhood radius, meters"},
      {"descriptor_dim", "built-in descriptor dimension"},
      {"sigma_min", "most-salient saliency uncertainty"},
      {"sigma_max", "least-salient saliency uncertainty"},
      {"match_mode", "descriptor matching: mutual | one_way"},
      {"ransac_max_iterations", "RANSAC iteration cap"},
      {"ransac_inlier_threshold", "RANSAC inlier distance, meters"},
      {"ransac_confidence", "RANSAC early-exit confidence, (0,1)"},
      {"icp_epsilon_conv", "ICP twist-norm convergence threshold"},
      {"icp_max_iters", "ICP iteration cap"},
      {"delta_min", "deviation deadband for the adaptive threshold, meters"},
      {"tau_default", "cold-start correspondence threshold, meters"},
      {"tau_floor", "correspondence threshold floor, meters"},
      {"margin_positive", "positive margin m_p of the contrastive loss"},
      {"margin_negative", "negative margin m_n of the contrastive loss"},
      {"lambda_positive", "weight of the positive contrastive term"},
      {"r_positive", "correspondence radius R_p, meters"},
      {"r_negative", "negative-set exclusion radius R_n, meters"},
      {"seed", "seed for all randomized procedures"},
      {"threads", "worker thread cap (0 = hardware)"},
  };
  return desc;
}

/// --config plus one flag per config key; flags override file values.
struct ConfigCli {
  PipelineConfig config;
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "configuration file, one 'key = value' per line");
    for (const auto& binding : config_bindings()) {
      std::string flag = "--" + binding.key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      const auto it = key_descriptions().find(binding.key);
      auto* opt = cmd->add_option(flag, flag_values[binding.key],
                                  it == key_descriptions().end() ? ""
                                                                 : it->second);
      flag_options.emplace_back(binding.key, opt);
    }
  }

  void resolve() {
    if (!config_path.empty()) load_config_file(config_path, config);
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) set_config_value(config, key, flag_values.at(key));
    }
    validate(config);
    set_thread_cap(config.threads);
  }
};

Pose read_single_pose(const std::filesystem::path& path) {
  const auto poses = read_poses(path);
  if (poses.empty()) throw IoFailure(path.string() + ": no pose line");
  return poses.front();
}

void write_report_file(const std::filesystem::path& path,
                       const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  char buf[256];
  std::snprintf(buf, sizeof(buf), "scans = %zu\n", report.per_scan.size());
  out << buf;
  std::snprintf(buf, sizeof(buf), "mean_wall_ms = %.3f\n", report.mean_wall_ms);
  out << buf;
  std::snprintf(buf, sizeof(buf), "mean_memory_kb = %.3f\n",
                report.mean_memory_bytes / 1024.0);
  out << buf;
  out << "# scan,wall_ms,keypoints,icp_iterations,correspondences,"
         "map_memory_bytes,ransac\n";
  for (std::size_t i = 0; i < report.per_scan.size(); ++i) {
    const auto& s = report.per_scan[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.3f,%zu,%d,%zu,%zu,%d\n", i,
                  s.wall_ms, s.keypoints, s.icp_iterations, s.correspondences,
                  s.map_memory_bytes, s.ransac_succeeded ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoFailure("write failed on " + path.string());
}

void print_rpe(const std::string& name, const RpeReport& report,
               std::ostream& ml) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "t_err=%.6f r_err=%.6f\n",
                report.t_err_percent, report.r_err_deg_per_100m);
  std::cout << buf;
  for (const auto& bucket : report.per_length) {
    std::snprintf(buf, sizeof(buf),
                  "length %.0f: t_err=%.6f r_err=%.6f segments=%zu\n",
                  bucket.length, bucket.t_err_percent,
                  bucket.r_err_deg_per_100m, bucket.segments);
    std::cout << buf;
  }
  if (ml) {
    ml << "t_err," << name << ',' << report.t_err_percent << '\n';
    ml << "r_err," << name << ',' << report.r_err_deg_per_100m << '\n';
  }
}

int cmd_run_odometry(const std::string& scan_dir, ConfigCli& cc,
                     const std::string& features_dir,
                     const std::string& out_trajectory,
                     const std::string& out_report) {
  cc.resolve();
  if (!features_dir.empty()) cc.config.feature_provider = "external";
  const auto source = ScanSource::from_directory(scan_dir);
  if (source.paths.empty())
    throw IoFailure("no .bin scans in " + scan_dir);
  const auto provider = make_feature_provider(cc.config, features_dir);
  const RunResult result = run_sequence(cc.config, source, *provider);
  write_poses(out_trajectory, result.trajectory);
  if (!out_report.empty()) write_report_file(out_report, result.report);
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "processed %zu scans, mean %.1f ms/scan, mean map %.1f KB\n",
                result.report.per_scan.size(), result.report.mean_wall_ms,
                result.report.mean_memory_bytes / 1024.0);
  std::cout << buf;
  return 0;
}

int cmd_register_pair(const std::string& scan_a, const std::string& scan_b,
                      ConfigCli& cc, const std::string& features_a,
                      const std::string& features_b) {
  cc.resolve();
  const PointCloud cloud_a = read_scan_bin(scan_a);
  const PointCloud cloud_b = read_scan_bin(scan_b);

  BuiltinFeatureParams fp;
  fp.radius = cc.config.feature_radius;
  fp.bins = cc.config.descriptor_dim;
  fp.sigma_min = cc.config.sigma_min;
  fp.sigma_max = cc.config.sigma_max;
  const FeatureSet fs_a = features_a.empty()
                              ? compute_builtin_features(cloud_a, fp)
                              : load_external_features(features_a, cloud_a.size());
  const FeatureSet fs_b = features_b.empty()
                              ? compute_builtin_features(cloud_b, fp)
                              : load_external_features(features_b, cloud_b.size());

  const auto mode = cc.config.match_mode == "one_way" ? MatchMode::kOneWay
                                                      : MatchMode::kMutual;
  const auto candidates = match_descriptors(fs_a, fs_b, mode);
  RansacParams rp;
  rp.max_iterations = cc.config.ransac_max_iterations;
  rp.inlier_threshold = cc.config.ransac_inlier_threshold;
  rp.confidence = cc.config.ransac_confidence;
  rp.seed = cc.config.seed;
  const auto result =
      ransac_register(candidates, cloud_a.positions, cloud_b.positions, rp);

  std::cout << pose_line(result.pose) << '\n';
  std::cout << "inliers=" << result.inlier_indices.size()
            << " candidates=" << candidates.size() << '\n';
  return 0;
}

int cmd_eval_rpe(const std::string& gt_arg, const std::string& est_arg,
                 const std::vector<std::string>& exclude,
                 const std::string& ml_path) {
  namespace fs = std::filesystem;
  std::ofstream ml;
  if (!ml_path.empty()) {
    ml.open(ml_path);
    if (!ml) throw IoFailure("cannot open " + ml_path + " for writing");
  }

  if (fs::is_directory(gt_arg) != fs::is_directory(est_arg))
    throw IoFailure("gt and est must both be files or both be directories");

  if (!fs::is_directory(gt_arg)) {
    const auto gt = read_poses(gt_arg);
    const auto est = read_poses(est_arg);
    print_rpe(fs::path(est_arg).stem().string(), kitti_rpe(gt, est), ml);
    return 0;
  }

  std::vector<fs::path> gt_files;
  for (const auto& entry : fs::directory_iterator(gt_arg))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      gt_files.push_back(entry.path());
  std::sort(gt_files.begin(), gt_files.end());

  double t_total = 0.0, r_total = 0.0;
  std::size_t evaluated = 0;
  for (const auto& gt_file : gt_files) {
    const std::string stem = gt_file.stem().string();
    if (std::find(exclude.begin(), exclude.end(), stem) != exclude.end()) {
      std::cout << "sequence " << stem << ": excluded\n";
      continue;
    }
    const fs::path est_file = fs::path(est_arg) / gt_file.filename();
    if (!fs::exists(est_file))
      throw IoFailure("missing estimate for sequence " + stem);
    std::cout << "sequence " << stem << ":\n";
    const auto report = kitti_rpe(read_poses(gt_file), read_poses(est_file));
    print_rpe(stem, report, ml);
    t_total += report.t_err_percent;
    r_total += report.r_err_deg_per_100m;
    ++evaluated;
  }
  if (evaluated == 0) throw IoFailure("no sequences evaluated");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "average: t_err=%.6f r_err=%.6f\n",
                t_total / static_cast<double>(evaluated),
                r_total / static_cast<double>(evaluated));
  std::cout << buf;
  if (ml) {
    ml << "t_err,average," << t_total / static_cast<double>(evaluated) << '\n';
    ml << "r_err,average," << r_total / static_cast<double>(evaluated) << '\n';
  }
  return 0;
}

int cmd_eval_pair(const std::string& gt_file, const std::string& est_file,
                  double rte_max, double rre_max) {
  const auto gt = read_poses(gt_file);
  const auto est = read_poses(est_file);
  if (gt.size() != est.size())
    throw TrajectoryLengthMismatch(gt.size(), est.size());
  if (gt.empty()) throw IoFailure("no pose pairs to evaluate");

  std::size_t successes = 0;
  char buf[160];
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto metrics = pair_metrics(gt[i], est[i], rte_max, rre_max);
    std::snprintf(buf, sizeof(buf), "pair %zu: rte=%.3f rre=%.4f success=%d\n",
                  i, metrics.rte_cm, metrics.rre_deg, metrics.success ? 1 : 0);
    std::cout << buf;
    if (metrics.success) ++successes;
  }
  std::snprintf(buf, sizeof(buf), "rr=%.6f pairs=%zu\n",
                static_cast<double>(successes) / static_cast<double>(gt.size()),
                gt.size());
  std::cout << buf;
  return 0;
}

int cmd_fmr_sweep(const std::string& manifest, ConfigCli& cc,
                  std::vector<double> tau1_values,
                  std::vector<double> tau2_values) {
  cc.resolve();
  if (tau1_values.empty())
    tau1_values = {0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
  if (tau2_values.empty())
    tau2_values = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};

  std::ifstream in(manifest);
  if (!in) throw IoFailure("cannot open " + manifest);
  std::vector<FmrPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  const auto mode = cc.config.match_mode == "one_way" ? MatchMode::kOneWay
                                                      : MatchMode::kMutual;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string cloud_a, cloud_b, feat_a, feat_b, pose_file;
    if (!(ss >> cloud_a >> cloud_b >> feat_a >> feat_b >> pose_file))
      throw IoFailure(manifest + ":" + std::to_string(line_no) +
                      ": want 'cloud_a cloud_b features_a features_b gt_pose'");
    const PointCloud a = read_scan_bin(cloud_a);
    const PointCloud b = read_scan_bin(cloud_b);
    const FeatureSet fa = load_external_features(feat_a, a.size());
    const FeatureSet fb = load_external_features(feat_b, b.size());
    const auto candidates = match_descriptors(fa, fb, mode);

    FmrPair pair;
    pair.gt_pose = read_single_pose(pose_file);
    pair.src.reserve(candidates.size());
    pair.dst.reserve(candidates.size());
    for (const auto& c : candidates) {
      pair.src.push_back(a.positions[c.src_index]);
      pair.dst.push_back(b.positions[c.dst_index]);
    }
    pairs.push_back(std::move(pair));
  }

  char buf[96];
  for (const double t1 : tau1_values) {
    for (const double t2 : tau2_values) {
      std::snprintf(buf, sizeof(buf), "fmr,%.6g,%.6g,%.6f\n", t1, t2,
                    fmr(pairs, t1, t2));
      std::cout << buf;
    }
  }
  return 0;
}

int cmd_losses_check(const std::string& cloud_a_path,
                     const std::string& cloud_b_path,
                     const std::string& features_a,
                     const std::string& features_b,
                     const std::string& gt_pose_file, ConfigCli& cc) {
  cc.resolve();
  const PointCloud cloud_a = read_scan_bin(cloud_a_path);
  const PointCloud cloud_b = read_scan_bin(cloud_b_path);
  const FeatureSet fa = load_external_features(features_a, cloud_a.size());
  const FeatureSet fb = load_external_features(features_b, cloud_b.size());
  const Pose gt = read_single_pose(gt_pose_file);

  const PointCloud aligned_a = transform_cloud(cloud_a, gt);
  TrainingPair pair{aligned_a, cloud_b, fa,
                    fb, cc.config.r_positive, cc.config.r_negative};
  CorrespondenceSet cs;
  try {
    cs = build_correspondences(pair);
  } catch (const EmptyResult&) {
    throw EmptyCorrespondences{};
  }

  LossMargins margins{cc.config.lambda_positive, cc.config.margin_positive,
                      cc.config.margin_negative};
  const double contrastive = contrastive_loss(cs, fa, fb, margins);
  const auto m_values =
      pair_matchabilities(cs, fa, fb, margins.m_p, margins.m_n);
  std::vector<std::pair<double, double>> sigma_values;
  sigma_values.reserve(cs.pairs.size());
  for (const auto& [i, j] : cs.pairs)
    sigma_values.emplace_back(fa.saliency(i), fb.saliency(j));
  const double detection = detection_loss(m_values, sigma_values);
  double mean_m = 0.0;
  for (const auto& [mi, mj] : m_values) mean_m += mi + mj;
  mean_m /= 2.0 * static_cast<double>(m_values.size());

  char buf[64];
  std::snprintf(buf, sizeof(buf), "contrastive=%.9g\n", contrastive);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "detection=%.9g\n", detection);
  std::cout << buf;
  std::snprintf(buf, sizeof(buf), "mean_matchability=%.9g\n", mean_m);
  std::cout << buf;
  return 0;
}

int cmd_map_export(const std::string& scan_dir, ConfigCli& cc,
                   const std::string& features_dir, const std::string& out) {
  cc.resolve();
  if (!features_dir.empty()) cc.config.feature_provider = "external";
  const auto source = ScanSource::from_directory(scan_dir);
  if (source.paths.empty()) throw IoFailure("no .bin scans in " + scan_dir);
  const auto provider = make_feature_provider(cc.config, features_dir);

  Odometry odometry(cc.config);
  for (std::size_t i = 0; i < source.paths.size(); ++i) {
    const PointCloud raw = read_scan_bin(source.paths[i]);
    const FeatureSet features = provider->features_for(raw, source.paths[i]);
    try {
      odometry.process_scan(raw, features);
    } catch (const std::exception& err) {
      throw PipelineError(i, err.what());
    }
  }
  std::ofstream os(out);
  if (!os) throw IoFailure("cannot open " + out + " for writing");
  odometry.map().export_text(os);
  if (!os) throw IoFailure("write failed on " + out);
  std::cout << "exported " << odometry.map().voxel_count() << " voxels ("
            << odometry.map().point_count() << " points, "
            << odometry.map().surfel_count() << " surfels)\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"LiDAR odometry and mapping with descriptor-matching RANSAC,\n"
               "surfel voxel maps, and robust adaptive scan-to-map ICP"};
  app.require_subcommand(1);

  // run-odometry
  auto* run = app.add_subcommand("run-odometry",
                                 "process a scan directory into a trajectory");
  std::string run_scan_dir, run_features_dir, run_out_traj, run_out_report;
  ConfigCli run_cc;
  run->add_option("scan_dir", run_scan_dir, "directory of .bin scans")
      ->required();
  run->add_option("--features-dir", run_features_dir,
                  "directory of .kddf sidecars (enables external features)");
  run->add_option("--out-trajectory", run_out_traj, "output trajectory file")
      ->required();
  run->add_option("--out-report", run_out_report, "output run-report file");
  run_cc.attach(run);

  // register-pair
  auto* reg = app.add_subcommand("register-pair",
                                 "RANSAC registration of two scans");
  std::string reg_a, reg_b, reg_fa, reg_fb;
  ConfigCli reg_cc;
  reg->add_option("scan_a", reg_a, "source scan (.bin)")->required();
  reg->add_option("scan_b", reg_b, "target scan (.bin)")->required();
  reg->add_option("--features-a", reg_fa, "sidecar for scan_a (else built-in)");
  reg->add_option("--features-b", reg_fb, "sidecar for scan_b (else built-in)");
  reg_cc.attach(reg);

  // eval-rpe
  auto* rpe = app.add_subcommand("eval-rpe",
                                 "segment-based relative pose error");
  std::string rpe_gt, rpe_est, rpe_ml;
  std::vector<std::string> rpe_exclude;
  rpe->add_option("gt", rpe_gt, "ground-truth pose file or directory")
      ->required();
  rpe->add_option("est", rpe_est, "estimated pose file or directory")
      ->required();
  rpe->add_option("--exclude", rpe_exclude,
                  "sequence names to skip in directory mode");
  rpe->add_option("--ml-out", rpe_ml,
                  "write machine-readable 'metric,sequence,value' lines here");

  // eval-pair
  auto* pair_cmd = app.add_subcommand("eval-pair",
                                      "per-pair RTE/RRE and registration recall");
  std::string pm_gt, pm_est;
  double pm_rte_max = 200.0, pm_rre_max = 5.0;
  pair_cmd->add_option("gt", pm_gt, "ground-truth pose file")->required();
  pair_cmd->add_option("est", pm_est, "estimated pose file")->required();
  pair_cmd->add_option("--rte-max", pm_rte_max, "success threshold, cm");
  pair_cmd->add_option("--rre-max", pm_rre_max, "success threshold, degrees");

  // fmr-sweep
  auto* fmr_cmd = app.add_subcommand("fmr-sweep",
                                     "feature matching recall over tau1/tau2");
  std::string fmr_manifest;
  std::vector<double> fmr_tau1, fmr_tau2;
  ConfigCli fmr_cc;
  fmr_cmd
      ->add_option("--pairs", fmr_manifest,
                   "manifest: cloud_a cloud_b features_a features_b gt_pose")
      ->required();
  fmr_cmd->add_option("--tau1", fmr_tau1, "inlier distance thresholds, meters");
  fmr_cmd->add_option("--tau2", fmr_tau2, "inlier ratio thresholds");
  fmr_cc.attach(fmr_cmd);

  // losses-check
  auto* losses = app.add_subcommand(
      "losses-check", "contrastive/detection losses of a registered pair");
  std::string lc_a, lc_b, lc_fa, lc_fb, lc_pose;
  ConfigCli lc_cc;
  losses->add_option("cloud_a", lc_a, "source scan (.bin)")->required();
  losses->add_option("cloud_b", lc_b, "target scan (.bin)")->required();
  losses->add_option("features_a", lc_fa, "sidecar for cloud_a")->required();
  losses->add_option("features_b", lc_fb, "sidecar for cloud_b")->required();
  losses->add_option("gt_pose", lc_pose, "file with the aligning pose line")
      ->required();
  lc_cc.attach(losses);

  // map-export
  auto* mapx = app.add_subcommand("map-export",
                                  "run the pipeline and export the final map");
  std::string mx_scan_dir, mx_features_dir, mx_out;
  ConfigCli mx_cc;
  mapx->add_option("scan_dir", mx_scan_dir, "directory of .bin scans")
      ->required();
  mapx->add_option("--features-dir", mx_features_dir,
                   "directory of .kddf sidecars");
  mapx->add_option("--out", mx_out, "output map file")->required();
  mx_cc.attach(mapx);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (run->parsed())
      return cmd_run_odometry(run_scan_dir, run_cc, run_features_dir,
                              run_out_traj, run_out_report);
    if (reg->parsed())
      return cmd_register_pair(reg_a, reg_b, reg_cc, reg_fa, reg_fb);
    if (rpe->parsed())
      return cmd_eval_rpe(rpe_gt, rpe_est, rpe_exclude, rpe_ml);
    if (pair_cmd->parsed())
      return cmd_eval_pair(pm_gt, pm_est, pm_rte_max, pm_rre_max);
    if (fmr_cmd->parsed())
      return cmd_fmr_sweep(fmr_manifest, fmr_cc, fmr_tau1, fmr_tau2);
    if (losses->parsed())
      return cmd_losses_check(lc_a, lc_b, lc_fa, lc_fb, lc_pose, lc_cc);
    if (mapx->parsed())
      return cmd_map_export(mx_scan_dir, mx_cc, mx_features_dir, mx_out);
  } catch (const PipelineError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const NoConsensus& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const TooFewCandidates& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const NoValidDescriptors& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const NoCorrespondences& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const SingularSystem& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace kelo
