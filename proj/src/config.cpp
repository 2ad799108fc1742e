#include "kelo/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace kelo {

const std::vector<ConfigBinding>& config_bindings() {
  static const std::vector<ConfigBinding> bindings = {
      {"voxel_size", &PipelineConfig::voxel_size},
      {"n_max", &PipelineConfig::n_max},
      {"min_point_spacing", &PipelineConfig::min_point_spacing},
      {"surfel_fitting", &PipelineConfig::surfel_fitting},
      {"epsilon_plane", &PipelineConfig::epsilon_plane},
      {"rho_min", &PipelineConfig::rho_min},
      {"alpha", &PipelineConfig::alpha},
      {"beta", &PipelineConfig::beta},
      {"keep_fraction", &PipelineConfig::keep_fraction},
      {"k_salient", &PipelineConfig::k_salient},
      {"min_range", &PipelineConfig::min_range},
      {"max_range", &PipelineConfig::max_range},
      {"feature_provider", &PipelineConfig::feature_provider},
      {"feature_radius", &PipelineConfig::feature_radius},
      {"descriptor_dim", &PipelineConfig::descriptor_dim},
      {"sigma_min", &PipelineConfig::sigma_min},
      {"sigma_max", &PipelineConfig::sigma_max},
      {"match_mode", &PipelineConfig::match_mode},
      {"ransac_max_iterations", &PipelineConfig::ransac_max_iterations},
      {"ransac_inlier_threshold", &PipelineConfig::ransac_inlier_threshold},
      {"ransac_confidence", &PipelineConfig::ransac_confidence},
      {"icp_epsilon_conv", &PipelineConfig::icp_epsilon_conv},
      {"icp_max_iters", &PipelineConfig::icp_max_iters},
      {"delta_min", &PipelineConfig::delta_min},
      {"tau_default", &PipelineConfig::tau_default},
      {"tau_floor", &PipelineConfig::tau_floor},
      {"margin_positive", &PipelineConfig::margin_positive},
      {"margin_negative", &PipelineConfig::margin_negative},
      {"lambda_positive", &PipelineConfig::lambda_positive},
      {"r_positive", &PipelineConfig::r_positive},
      {"r_negative", &PipelineConfig::r_negative},
      {"seed", &PipelineConfig::seed},
      {"threads", &PipelineConfig::threads},
  };
  return bindings;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t consumed = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "'");
  }
  if (consumed != value.size())
    throw ConfigError("key '" + key + "': cannot parse '" + value + "'");
  return out;
}

}  // namespace

void set_config_value(PipelineConfig& config, const std::string& key,
                      const std::string& value) {
  for (const auto& binding : config_bindings()) {
    if (binding.key != key) continue;
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(config.*member)>;
          if constexpr (std::is_same_v<T, double>) {
            config.*member = parse_double(key, value);
          } else if constexpr (std::is_same_v<T, int>) {
            const double v = parse_double(key, value);
            config.*member = static_cast<int>(v);
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            const double v = parse_double(key, value);
            if (v < 0.0) throw ConfigError("key '" + key + "': must be >= 0");
            config.*member = static_cast<std::uint64_t>(v);
          } else if constexpr (std::is_same_v<T, bool>) {
            std::string lower = value;
            std::transform(lower.begin(), lower.end(), lower.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (lower == "true" || lower == "1" || lower == "on")
              config.*member = true;
            else if (lower == "false" || lower == "0" || lower == "off")
              config.*member = false;
            else
              throw ConfigError("key '" + key + "': expected a boolean, got '" +
                                value + "'");
          } else {
            config.*member = value;
          }
        },
        binding.member);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(const std::filesystem::path& path,
                      PipelineConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        err.what());
    }
  }
}

void validate(const PipelineConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.voxel_size > 0.0, "voxel_size must be > 0");
  require(c.n_max >= 1, "n_max must be >= 1");
  require(c.min_point_spacing >= 0.0, "min_point_spacing must be >= 0");
  require(c.epsilon_plane > 0.0, "epsilon_plane must be > 0");
  require(c.rho_min >= 0.0 && c.rho_min <= 1.0, "rho_min must be in [0, 1]");
  require(c.alpha > 0.0 && c.alpha <= 1.0, "alpha must be in (0, 1]");
  require(c.beta >= 1.0 && c.beta <= 2.0, "beta must be in [1, 2]");
  require(c.keep_fraction > 0.0 && c.keep_fraction <= 1.0,
          "keep_fraction must be in (0, 1]");
  require(c.k_salient >= 1, "k_salient must be >= 1");
  require(c.min_range >= 0.0 && c.min_range < c.max_range,
          "need 0 <= min_range < max_range");
  require(c.feature_provider == "builtin" || c.feature_provider == "external",
          "feature_provider must be 'builtin' or 'external'");
  require(c.feature_radius > 0.0, "feature_radius must be > 0");
  require(c.descriptor_dim >= 9, "descriptor_dim must be >= 9");
  require(c.sigma_min > 0.0 && c.sigma_min < c.sigma_max,
          "need 0 < sigma_min < sigma_max");
  require(c.match_mode == "mutual" || c.match_mode == "one_way",
          "match_mode must be 'mutual' or 'one_way'");
  require(c.ransac_max_iterations >= 1, "ransac_max_iterations must be >= 1");
  require(c.ransac_inlier_threshold > 0.0,
          "ransac_inlier_threshold must be > 0");
  require(c.ransac_confidence > 0.0 && c.ransac_confidence < 1.0,
          "ransac_confidence must be in (0, 1)");
  require(c.icp_epsilon_conv > 0.0, "icp_epsilon_conv must be > 0");
  require(c.icp_max_iters >= 1, "icp_max_iters must be >= 1");
  require(c.delta_min >= 0.0, "delta_min must be >= 0");
  require(c.tau_default > 0.0, "tau_default must be > 0");
  require(c.tau_floor > 0.0, "tau_floor must be > 0");
  require(c.margin_positive >= 0.0 && c.margin_positive < c.margin_negative,
          "need 0 <= margin_positive < margin_negative");
  require(c.r_positive > 0.0 && c.r_negative >= c.r_positive,
          "need r_negative >= r_positive > 0");
}

}  // namespace kelo
