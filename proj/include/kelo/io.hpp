/**
 * \file io.hpp
 * \brief Dataset ingestion and result persistence.
 *
 * Scan binary: little-endian float32 quadruples (x, y, z, intensity).
 * Trajectory: one pose per line, 12 floats, row-major upper 3x4 of the 4x4
 * matrix. Feature sidecar: see features.hpp. All readers use strict length
 * checks and reject trailing bytes.
 */
#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kelo/cloud.hpp"
#include "kelo/features.hpp"
#include "kelo/geometry.hpp"

namespace kelo {

struct IoFailure : std::runtime_error {
  explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};
struct SizeNotMultipleOf16 : std::runtime_error {
  explicit SizeNotMultipleOf16(const std::filesystem::path& p)
      : std::runtime_error(p.string() + ": size not a multiple of 16") {}
};
struct FieldCountMismatch : std::runtime_error {
  FieldCountMismatch(std::size_t line, std::size_t got)
      : std::runtime_error("pose line " + std::to_string(line) + " has " +
                           std::to_string(got) + " fields, want 12") {}
};
struct NonNumeric : std::runtime_error {
  explicit NonNumeric(std::size_t line)
      : std::runtime_error("pose line " + std::to_string(line) +
                           " has a non-numeric field") {}
};

/// Reads a raw scan. Per-point timestamps are reconstructed from the
/// azimuth: progress is unwrapped along the dominant spin direction and
/// normalized by the total swept angle, so the first point gets 0 and the
/// last point of the sweep gets 1.
PointCloud read_scan_bin(const std::filesystem::path& path);

std::vector<Pose> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, std::span<const Pose> poses);

/// Exact inverse of load_external_features (all float32 bits preserved).
void write_features(const std::filesystem::path& path, const FeatureSet& fs);

/// Ordered scan file listing; processing order is the lexicographic order of
/// the file names, independent of directory enumeration order.
struct ScanSource {
  std::vector<std::filesystem::path> paths;

  static ScanSource from_directory(const std::filesystem::path& dir,
                                   const std::string& extension = ".bin");
};

}  // namespace kelo
