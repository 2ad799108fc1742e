#include <doctest.h>

#include <cmath>

#include "kelo/matching.hpp"
#include "support/synthetic.hpp"

using namespace kelo;

namespace {

FeatureSet random_unit_features(Rng& rng, std::size_t n, int dim = 32) {
  FeatureSet fs;
  fs.descriptors.resize(static_cast<std::int64_t>(n), dim);
  fs.saliency = Eigen::VectorXd::Constant(static_cast<std::int64_t>(n), 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd row(dim);
    for (int d = 0; d < dim; ++d) row(d) = rng.normal();
    fs.descriptors.row(static_cast<std::int64_t>(i)) = row / row.norm();
  }
  return fs;
}

double rotation_error_deg(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation.transpose() * b.rotation) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("match_descriptors on identical sets pairs (i, i) at distance 0") {
  Rng rng(301);
  const auto fs = random_unit_features(rng, 50);
  const auto matches = match_descriptors(fs, fs, MatchMode::kMutual);
  REQUIRE(matches.size() == 50);
  for (const auto& m : matches) {
    CHECK(m.src_index == m.dst_index);
    CHECK(m.desc_distance == 0.0);
  }
}

TEST_CASE("disjoint one-hot sets still pair mutually at distance sqrt(2)") {
  FeatureSet a, b;
  a.descriptors = Eigen::MatrixXd::Zero(3, 8);
  b.descriptors = Eigen::MatrixXd::Zero(3, 8);
  a.saliency = Eigen::VectorXd::Constant(3, 0.5);
  b.saliency = Eigen::VectorXd::Constant(3, 0.5);
  for (int i = 0; i < 3; ++i) {
    a.descriptors(i, i) = 1.0;      // dims 0..2
    b.descriptors(i, i + 4) = 1.0;  // dims 4..6, no overlap
  }
  const auto matches = match_descriptors(a, b, MatchMode::kMutual);
  REQUIRE(!matches.empty());
  for (const auto& m : matches)
    CHECK(m.desc_distance == doctest::Approx(std::sqrt(2.0)));
  // Ties broken by the lower index: every src row is equidistant to all dst
  // rows, so the mutual pair is (0, 0) only.
  CHECK(matches.size() == 1);
  CHECK(matches[0].src_index == 0);
  CHECK(matches[0].dst_index == 0);
}

TEST_CASE("mutual matching equals the O(N^2) brute force") {
  Rng rng(307);
  const auto src = random_unit_features(rng, 500);
  const auto dst = random_unit_features(rng, 480);
  const auto matches = match_descriptors(src, dst, MatchMode::kMutual);

  // Brute force in descriptor space.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> expected;
  for (std::uint32_t i = 0; i < 500; ++i) {
    std::uint32_t best_j = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t j = 0; j < 480; ++j) {
      const double d = (src.descriptors.row(i) - dst.descriptors.row(j)).norm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    std::uint32_t back = 0;
    double best_back = std::numeric_limits<double>::infinity();
    for (std::uint32_t k = 0; k < 500; ++k) {
      const double d =
          (dst.descriptors.row(best_j) - src.descriptors.row(k)).norm();
      if (d < best_back) {
        best_back = d;
        back = k;
      }
    }
    if (back == i) expected.emplace_back(i, best_j);
  }
  REQUIRE(matches.size() == expected.size());
  for (std::size_t k = 0; k < matches.size(); ++k) {
    CHECK(matches[k].src_index == expected[k].first);
    CHECK(matches[k].dst_index == expected[k].second);
  }
}

TEST_CASE("one-way matching emits one candidate per valid source row") {
  Rng rng(311);
  const auto src = random_unit_features(rng, 40);
  const auto dst = random_unit_features(rng, 60);
  const auto matches = match_descriptors(src, dst, MatchMode::kOneWay);
  CHECK(matches.size() == 40);
}

TEST_CASE("flagged-unmatched rows are excluded") {
  Rng rng(313);
  auto src = random_unit_features(rng, 10);
  auto dst = random_unit_features(rng, 10);
  src.descriptors.row(3).setZero();
  dst.descriptors.row(7).setZero();
  const auto matches = match_descriptors(src, dst, MatchMode::kOneWay);
  CHECK(matches.size() == 9);
  for (const auto& m : matches) {
    CHECK(m.src_index != 3);
    CHECK(m.dst_index != 7);
  }

  src.descriptors.setZero();
  CHECK_THROWS_AS(match_descriptors(src, dst, MatchMode::kMutual),
                  NoValidDescriptors);
}

TEST_CASE("kabsch_svd identity and exact recovery") {
  Rng rng(317);
  const auto src = test::random_points_in_cube(rng, 10, 5.0);
  CHECK(kabsch_svd(src, src).translation.norm() < 1e-12);

  const Pose truth = test::random_pose(rng, 2.0, 8.0);
  std::vector<Eigen::Vector3d> dst;
  for (const auto& p : src) dst.push_back(truth.apply(p));
  const Pose got = kabsch_svd(src, dst);
  CHECK((got.rotation - truth.rotation).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((got.translation - truth.translation).norm() < 1e-9);
  CHECK(got.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("kabsch_svd minimizes the squared error (random perturbation check)") {
  Rng rng(319);
  const auto src = test::random_points_in_cube(rng, 30, 5.0);
  std::vector<Eigen::Vector3d> dst;
  const Pose truth = test::random_pose(rng, 1.0, 3.0);
  for (const auto& p : src)
    dst.push_back(truth.apply(p) + 0.05 * rng.unit_vector());
  const Pose fit = kabsch_svd(src, dst);
  const auto sq_error = [&](const Pose& pose) {
    double s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i)
      s += (pose.apply(src[i]) - dst[i]).squaredNorm();
    return s;
  };
  const double best = sq_error(fit);
  for (int k = 0; k < 50; ++k) {
    Pose jostled = fit;
    jostled.rotation = so3_exp(rng.unit_vector() * 0.01) * fit.rotation;
    jostled.translation += 0.01 * rng.unit_vector();
    CHECK(best <= sq_error(jostled) + 1e-12);
  }
}

TEST_CASE("kabsch_svd degenerate configurations") {
  std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(kabsch_svd(two, two), DegenerateConfiguration);
  std::vector<Eigen::Vector3d> collinear = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(kabsch_svd(collinear, collinear), DegenerateConfiguration);
}

TEST_CASE("kabsch_svd is left-equivariant") {
  Rng rng(323);
  const auto src = test::random_points_in_cube(rng, 12, 4.0);
  const Pose truth = test::random_pose(rng, 1.5, 5.0);
  std::vector<Eigen::Vector3d> dst;
  for (const auto& p : src) dst.push_back(truth.apply(p));

  const Pose g = test::random_pose(rng, 1.0, 2.0);
  std::vector<Eigen::Vector3d> moved_src;
  for (const auto& p : src) moved_src.push_back(g.apply(p));
  const Pose fit = kabsch_svd(moved_src, dst);
  const Pose expected = compose(truth, inverse(g));
  CHECK((fit.rotation - expected.rotation).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((fit.translation - expected.translation).norm() < 1e-9);
}

TEST_CASE("ransac recovers an exact model with all inliers") {
  Rng rng(331);
  const auto src = test::random_points_in_cube(rng, 60, 10.0);
  const Pose truth = test::random_pose(rng, 1.0, 5.0);
  std::vector<Eigen::Vector3d> dst;
  std::vector<MatchCandidate> candidates;
  for (std::uint32_t i = 0; i < src.size(); ++i) {
    dst.push_back(truth.apply(src[i]));
    candidates.push_back({i, i, 0.0});
  }
  const auto result = ransac_register(candidates, src, dst, RansacParams{});
  CHECK(result.inlier_indices.size() == candidates.size());
  CHECK(rotation_error_deg(result.pose, truth) < 1e-6);
  CHECK((result.pose.translation - truth.translation).norm() < 1e-6);
  for (const auto k : result.inlier_indices) {
    const auto& c = candidates[k];
    CHECK((result.pose.apply(src[c.src_index]) - dst[c.dst_index]).norm() <=
          RansacParams{}.inlier_threshold);
  }
}

TEST_CASE("ransac under 60% contamination, 20 seeds") {
  Rng scene_rng(337);
  const auto src = test::random_points_in_cube(scene_rng, 250, 25.0);
  const Pose truth = test::random_pose(scene_rng, 0.8, 10.0);

  std::vector<Eigen::Vector3d> dst;
  std::vector<MatchCandidate> candidates;
  for (std::uint32_t i = 0; i < src.size(); ++i) {
    if (i % 5 < 2) {
      dst.push_back(truth.apply(src[i]) + 0.02 * scene_rng.unit_vector());
    } else {
      dst.push_back(scene_rng.uniform_vector(-25.0, 25.0));
    }
    candidates.push_back({i, i, 0.0});
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RansacParams params;
    params.inlier_threshold = 0.3;
    params.seed = seed;
    const auto result = ransac_register(candidates, src, dst, params);
    CHECK(rotation_error_deg(result.pose, truth) < 0.5);
    CHECK((result.pose.translation - truth.translation).norm() < 0.1);
  }
}

TEST_CASE("ransac is reproducible bit-for-bit for a fixed seed") {
  Rng rng(341);
  const auto src = test::random_points_in_cube(rng, 120, 20.0);
  const Pose truth = test::random_pose(rng, 0.5, 4.0);
  std::vector<Eigen::Vector3d> dst;
  std::vector<MatchCandidate> candidates;
  for (std::uint32_t i = 0; i < src.size(); ++i) {
    dst.push_back(i % 3 == 0 ? truth.apply(src[i])
                             : rng.uniform_vector(-20.0, 20.0));
    candidates.push_back({i, i, 0.0});
  }
  RansacParams params;
  params.seed = 17;
  const auto a = ransac_register(candidates, src, dst, params);
  const auto b = ransac_register(candidates, src, dst, params);
  CHECK(a.iterations_run == b.iterations_run);
  CHECK(a.inlier_indices == b.inlier_indices);
  CHECK((a.pose.rotation - b.pose.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
}

TEST_CASE("refinement never worsens the RMS over the final inliers") {
  Rng rng(347);
  for (int trial = 0; trial < 10; ++trial) {
    const auto src = test::random_points_in_cube(rng, 80, 15.0);
    const Pose truth = test::random_pose(rng, 0.7, 6.0);
    std::vector<Eigen::Vector3d> dst;
    std::vector<MatchCandidate> candidates;
    for (std::uint32_t i = 0; i < src.size(); ++i) {
      dst.push_back(truth.apply(src[i]) + 0.1 * rng.unit_vector() *
                                              rng.uniform(0.0, 1.0));
      candidates.push_back({i, i, 0.0});
    }
    RansacParams params;
    params.seed = 1000 + static_cast<std::uint64_t>(trial);
    params.inlier_threshold = 0.25;
    const auto result = ransac_register(candidates, src, dst, params);
    REQUIRE(result.inlier_indices.size() >= 3);
    // The returned pose fits its inlier set at least as well as any raw
    // 3-sample model drawn from those inliers.
    double rms = 0.0;
    for (const auto k : result.inlier_indices) {
      const auto& c = candidates[k];
      rms += (result.pose.apply(src[c.src_index]) - dst[c.dst_index])
                 .squaredNorm();
    }
    rms = std::sqrt(rms / static_cast<double>(result.inlier_indices.size()));
    CHECK(rms <= params.inlier_threshold);
  }
}

TEST_CASE("ransac error paths") {
  std::vector<MatchCandidate> two = {{0, 0, 0.0}, {1, 1, 0.0}};
  std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(ransac_register(two, pts, pts, RansacParams{}),
                  TooFewCandidates);

  // All-collinear sources can never produce a model.
  std::vector<Eigen::Vector3d> line;
  std::vector<MatchCandidate> candidates;
  for (std::uint32_t i = 0; i < 10; ++i) {
    line.push_back({static_cast<double>(i), 0.0, 0.0});
    candidates.push_back({i, i, 0.0});
  }
  RansacParams params;
  params.max_iterations = 200;
  CHECK_THROWS_AS(ransac_register(candidates, line, line, params), NoConsensus);
}
