#include "kelo/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kelo {

PointCloud read_scan_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (size % 16 != 0) throw SizeNotMultipleOf16(path);

  const std::size_t n = size / 16;
  std::vector<float> raw(n * 4);
  if (n > 0) {
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(size));
    if (!in) throw IoFailure("short read on " + path.string());
  }

  PointCloud cloud;
  cloud.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point p;
    p.position = Eigen::Vector3d(raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]);
    p.intensity = raw[4 * i + 3];
    cloud.push_back(p);
  }

  // Azimuth-based timestamps: unwrap the spin angle point to point, then
  // normalize by the total swept angle.
  if (n >= 2) {
    std::vector<double> unwrapped(n, 0.0);
    double prev = std::atan2(cloud.positions[0].y(), cloud.positions[0].x());
    for (std::size_t i = 1; i < n; ++i) {
      const double az =
          std::atan2(cloud.positions[i].y(), cloud.positions[i].x());
      double step = az - prev;
      while (step > M_PI) step -= 2.0 * M_PI;
      while (step <= -M_PI) step += 2.0 * M_PI;
      unwrapped[i] = unwrapped[i - 1] + step;
      prev = az;
    }
    const double total = unwrapped.back();
    if (std::abs(total) > 1e-9) {
      for (std::size_t i = 0; i < n; ++i)
        cloud.timestamps[i] = std::clamp(unwrapped[i] / total, 0.0, 1.0);
    }
    // No measurable sweep: keep the scan-end default of 1.0.
  }
  return cloud;
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<double> fields;
    std::string token;
    while (ss >> token) {
      std::size_t consumed = 0;
      double value = 0.0;
      try {
        value = std::stod(token, &consumed);
      } catch (const std::exception&) {
        throw NonNumeric(line_no);
      }
      if (consumed != token.size()) throw NonNumeric(line_no);
      fields.push_back(value);
    }
    if (fields.size() != 12) throw FieldCountMismatch(line_no, fields.size());
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = fields[4 * r + c];
      p.translation(r) = fields[4 * r + 3];
    }
    poses.push_back(p);
  }
  return poses;
}

void write_poses(const std::filesystem::path& path,
                 std::span<const Pose> poses) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  char buf[64];
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? p.rotation(r, c) : p.translation(r);
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
        if (!(r == 2 && c == 3)) out << ' ';
      }
    }
    out << '\n';
  }
  if (!out) throw IoFailure("write failed on " + path.string());
}

void write_features(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  const auto count = static_cast<std::uint32_t>(fs.count());
  const auto dim = static_cast<std::uint32_t>(fs.dim());
  out.write(kFeatureMagic, 4);
  const std::uint32_t version = kFeatureVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);

  std::vector<float> record(dim + 1);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t d = 0; d < dim; ++d)
      record[d] = static_cast<float>(fs.descriptors(i, d));
    record[dim] = static_cast<float>(fs.saliency(i));
    out.write(reinterpret_cast<const char*>(record.data()),
              static_cast<std::streamsize>(record.size() * 4));
  }
  if (!out) throw IoFailure("write failed on " + path.string());
}

ScanSource ScanSource::from_directory(const std::filesystem::path& dir,
                                      const std::string& extension) {
  ScanSource source;
  if (!std::filesystem::is_directory(dir))
    throw IoFailure(dir.string() + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension)
      source.paths.push_back(entry.path());
  }
  std::sort(source.paths.begin(), source.paths.end(),
            [](const auto& a, const auto& b) {
              return a.filename().string() < b.filename().string();
            });
  return source;
}

}  // namespace kelo
