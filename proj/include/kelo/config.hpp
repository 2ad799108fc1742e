/**
 * \file config.hpp
 * \brief Pipeline configuration: defaults, validation, and the flat
 *        key = value config file format (# starts a comment).
 *
 * Every tunable constant of the pipeline is a named key here; command-line
 * flags override file values. Unknown keys are rejected, not ignored.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace kelo {

struct PipelineConfig {
  // Map
  double voxel_size = 1.0;          // v, meters
  int n_max = 20;                   // raw-point cap per voxel
  double min_point_spacing = 0.1;   // duplicate rejection inside a voxel
  bool surfel_fitting = true;
  double epsilon_plane = 0.05;      // max plane-fit RMS, meters
  double rho_min = 0.75;            // min planarity for surfel acceptance

  // Two-stage subsampling
  double alpha = 0.5;               // stage-1 voxel size factor, (0, 1]
  double beta = 1.5;                // stage-2 voxel size factor, [1, 2]
  double keep_fraction = 0.7;       // saliency rank filter, (0, 1]
  int k_salient = 3;                // points kept per stage-2 voxel

  // Range crop
  double min_range = 1.0;           // meters
  double max_range = 100.0;         // meters (also the deviation-bound r)

  // Features
  std::string feature_provider = "builtin";  // builtin | external
  double feature_radius = 1.0;
  int descriptor_dim = 32;
  double sigma_min = 0.05;
  double sigma_max = 1.0;

  // Scan-to-scan matching
  std::string match_mode = "mutual";  // mutual | one_way
  int ransac_max_iterations = 50000;
  double ransac_inlier_threshold = 0.6;  // meters
  double ransac_confidence = 0.999;

  // Scan-to-map ICP
  double icp_epsilon_conv = 1e-4;
  int icp_max_iters = 100;
  double delta_min = 0.1;           // deviation deadband, meters
  double tau_default = 2.0;         // cold-start threshold, meters
  double tau_floor = 0.3;           // threshold floor, meters

  // Loss margins (losses-check)
  double margin_positive = 0.1;
  double margin_negative = 1.4;
  double lambda_positive = 1.0;
  double r_positive = 0.5;          // correspondence radius, meters
  double r_negative = 1.0;          // negative-set exclusion radius, meters

  std::uint64_t seed = 0;
  int threads = 0;                  // 0 = hardware default
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigBinding {
  std::string key;
  std::variant<double PipelineConfig::*, int PipelineConfig::*,
               bool PipelineConfig::*, std::string PipelineConfig::*,
               std::uint64_t PipelineConfig::*>
      member;
};

const std::vector<ConfigBinding>& config_bindings();

/// Applies the file's key = value lines on top of config. Throws ConfigError
/// naming the key for unknown keys, and with the line number for malformed
/// lines or unparsable values.
void load_config_file(const std::filesystem::path& path,
                      PipelineConfig& config);

/// Sets a single key from its textual value (same rules as the file format).
void set_config_value(PipelineConfig& config, const std::string& key,
                      const std::string& value);

/// Range-checks the configuration (alpha in (0,1], beta in [1,2], ...).
void validate(const PipelineConfig& config);

}  // namespace kelo
