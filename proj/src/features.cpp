#include "kelo/features.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "kelo/threading.hpp"
#include "kelo/voxel_map.hpp"

namespace kelo {

namespace {

struct NeighborhoodShape {
  Eigen::Vector3d centroid;
  Eigen::Vector3d eigenvalues;  // descending
  Eigen::Vector3d normal;       // unit, unoriented
};

NeighborhoodShape shape_of(const std::vector<Eigen::Vector3d>& positions) {
  const auto n = static_cast<double>(positions.size());
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : positions) centroid += p;
  centroid /= n;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : positions) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  NeighborhoodShape out;
  out.centroid = centroid;
  out.eigenvalues = Eigen::Vector3d(std::max(eig.eigenvalues()(2), 0.0),
                                    std::max(eig.eigenvalues()(1), 0.0),
                                    std::max(eig.eigenvalues()(0), 0.0));
  out.normal = eig.eigenvectors().col(0).normalized();
  return out;
}

/// Saliency from eigenvalue ratios only, so it is invariant to uniform
/// scaling. Unambiguous planes (clear 2D spread, negligible residual) snap
/// to sigma_max; otherwise sigma grades with planarity, putting edges and
/// corners near sigma_min.
double saliency_of(const Eigen::Vector3d& evals, double sigma_min,
                   double sigma_max) {
  const double l1 = evals(0), l2 = evals(1), l3 = evals(2);
  if (l1 <= 0.0) return sigma_max;
  const bool flat = l2 > 1e-6 * l1 && l3 <= 1e-4 * l2;
  if (flat) return sigma_max;
  const double planarity = std::clamp((l2 - l3) / l1, 0.0, 1.0);
  return sigma_min + (sigma_max - sigma_min) * planarity;
}

void add_sample(Eigen::Ref<Eigen::VectorXd> hist, double x, double lo,
                double hi) {
  const auto nbins = hist.size();
  auto b = static_cast<std::int64_t>((x - lo) / (hi - lo) *
                                     static_cast<double>(nbins));
  b = std::clamp<std::int64_t>(b, 0, nbins - 1);
  hist(b) += 1.0;
}

}  // namespace

FeatureSet gather_features(const FeatureSet& fs,
                           std::span<const std::uint32_t> rows) {
  FeatureSet out;
  out.descriptors.resize(static_cast<std::int64_t>(rows.size()), fs.dim());
  out.saliency.resize(static_cast<std::int64_t>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.descriptors.row(static_cast<std::int64_t>(r)) =
        fs.descriptors.row(rows[r]);
    out.saliency(static_cast<std::int64_t>(r)) = fs.saliency(rows[r]);
  }
  return out;
}

LocalFrameStats local_stats(const PointCloud& cloud, std::size_t center_index,
                            double radius) {
  if (radius <= 0.0) throw std::invalid_argument("local_stats: radius <= 0");
  PointGrid grid(cloud.positions, radius / 2.0);
  const auto nbrs = grid.neighbors_within(cloud.positions[center_index], radius);
  if (nbrs.size() < 5) throw InsufficientNeighbors(nbrs.size());

  std::vector<Eigen::Vector3d> pts;
  pts.reserve(nbrs.size());
  for (auto j : nbrs) pts.push_back(cloud.positions[j]);
  const NeighborhoodShape shape = shape_of(pts);

  LocalFrameStats out;
  out.centroid = shape.centroid;
  out.eigenvalues = shape.eigenvalues;
  out.normal = shape.normal;
  if (out.normal.dot(-cloud.positions[center_index]) < 0.0)
    out.normal = -out.normal;
  return out;
}

FeatureSet compute_builtin_features(const PointCloud& cloud,
                                    const BuiltinFeatureParams& params) {
  if (params.radius <= 0.0)
    throw std::invalid_argument("builtin features: radius <= 0");
  if (params.bins < 9)
    throw std::invalid_argument("builtin features: need bins >= 9");
  const int bins_angle = (params.bins + 1) / 3;
  const int bins_dist = bins_angle;
  const int bins_pair = params.bins - bins_angle - bins_dist;

  const auto n = cloud.size();
  FeatureSet fs;
  fs.descriptors = Eigen::MatrixXd::Zero(static_cast<std::int64_t>(n),
                                         params.bins);
  fs.saliency =
      Eigen::VectorXd::Constant(static_cast<std::int64_t>(n), params.sigma_max);
  if (n == 0) return fs;

  PointGrid grid(cloud.positions, params.radius / 2.0);

  std::vector<std::vector<std::uint32_t>> neighbor_lists(n);
  std::vector<Eigen::Vector3d> normals(n);
  std::vector<std::uint8_t> has_normal(n, 0);

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::Vector3d> pts;
    for (std::size_t i = begin; i < end; ++i) {
      auto nbrs = grid.neighbors_within(cloud.positions[i], params.radius);
      if (nbrs.size() < 5) {
        neighbor_lists[i] = std::move(nbrs);
        continue;  // flagged unmatched: zero descriptor, sigma_max
      }
      pts.clear();
      for (auto j : nbrs) pts.push_back(cloud.positions[j]);
      const NeighborhoodShape shape = shape_of(pts);
      Eigen::Vector3d normal = shape.normal;
      if (normal.dot(-cloud.positions[i]) < 0.0) normal = -normal;
      normals[i] = normal;
      has_normal[i] = 1;
      fs.saliency(static_cast<std::int64_t>(i)) =
          saliency_of(shape.eigenvalues, params.sigma_min, params.sigma_max);
      neighbor_lists[i] = std::move(nbrs);
    }
  });

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> with_normal;
    for (std::size_t i = begin; i < end; ++i) {
      if (!has_normal[i]) continue;
      Eigen::VectorXd row = Eigen::VectorXd::Zero(params.bins);
      auto hist_angle = row.segment(0, bins_angle);
      auto hist_dist = row.segment(bins_angle, bins_dist);
      auto hist_pair = row.segment(bins_angle + bins_dist, bins_pair);

      with_normal.clear();
      for (auto j : neighbor_lists[i]) {
        if (j == i) continue;
        const double d = (cloud.positions[j] - cloud.positions[i]).norm();
        add_sample(hist_dist, d / params.radius, 0.0, 1.0);
        if (has_normal[j]) {
          add_sample(hist_angle, normals[i].dot(normals[j]), -1.0, 1.0);
          with_normal.push_back(j);
        }
      }

      const std::size_t m = with_normal.size();
      if (m >= 2) {
        const std::size_t total_pairs = m * (m - 1) / 2;
        if (total_pairs <= static_cast<std::size_t>(params.max_normal_pairs)) {
          for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b)
              add_sample(hist_pair,
                         normals[with_normal[a]].dot(normals[with_normal[b]]),
                         -1.0, 1.0);
        } else {
          // Deterministic LCG sample keyed by the point index; neighbor
          // lists are sorted by original index, so a rigidly moved copy of
          // the cloud samples the same pairs.
          std::uint64_t s = 0x9e3779b97f4a7c15ull * (i + 1);
          for (int k = 0; k < params.max_normal_pairs; ++k) {
            s = s * 6364136223846793005ull + 1442695040888963407ull;
            const std::size_t a = (s >> 33) % m;
            s = s * 6364136223846793005ull + 1442695040888963407ull;
            std::size_t b = (s >> 33) % (m - 1);
            if (b >= a) ++b;
            add_sample(hist_pair,
                       normals[with_normal[a]].dot(normals[with_normal[b]]),
                       -1.0, 1.0);
          }
        }
      }

      const double norm = row.norm();
      if (norm > 0.0)
        fs.descriptors.row(static_cast<std::int64_t>(i)) = row / norm;
    }
  });

  return fs;
}

FeatureSet load_external_features(const std::filesystem::path& path,
                                  std::optional<std::size_t> expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedHeader("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (file_size < 16) throw MalformedHeader("file shorter than header");

  char magic[4];
  std::uint32_t version = 0, count = 0, dim = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw MalformedHeader("bad magic");
  if (version != kFeatureVersion)
    throw MalformedHeader("unsupported version " + std::to_string(version));
  if (dim == 0 || dim > 4096)
    throw MalformedHeader("implausible descriptor dim " + std::to_string(dim));

  const std::uint64_t payload =
      static_cast<std::uint64_t>(count) * (dim + 1ull) * 4ull;
  if (file_size != 16 + payload) throw TruncatedPayload{};
  if (expected_count && count != *expected_count)
    throw CountMismatch(count, *expected_count);

  FeatureSet fs;
  fs.descriptors.resize(count, dim);
  fs.saliency.resize(count);
  std::vector<float> record(dim + 1);
  std::size_t renormalized = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(record.data()),
            static_cast<std::streamsize>(record.size() * 4));
    if (!in) throw TruncatedPayload{};
    for (std::uint32_t d = 0; d < dim; ++d)
      fs.descriptors(i, d) = static_cast<double>(record[d]);
    const double sigma = static_cast<double>(record[dim]);
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("feature sidecar: non-positive saliency at record " +
                                  std::to_string(i));
    fs.saliency(i) = sigma;

    const double norm = fs.descriptors.row(i).norm();
    if (norm > 0.0 && std::abs(norm - 1.0) > 1e-3) {
      fs.descriptors.row(i) /= norm;
      ++renormalized;
    }
  }
  if (renormalized > 0) {
    std::cerr << "warning: " << path.string() << ": re-normalized "
              << renormalized << " descriptor rows\n";
  }
  return fs;
}

}  // namespace kelo
