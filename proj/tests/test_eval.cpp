#include <doctest.h>

#include <cmath>

#include "kelo/eval.hpp"
#include "support/synthetic.hpp"

using namespace kelo;

namespace {

// Straight trajectory along +x, one pose per meter.
std::vector<Pose> straight_line(std::size_t frames, double step = 1.0) {
  std::vector<Pose> out;
  for (std::size_t i = 0; i < frames; ++i) {
    Pose p;
    p.translation = Eigen::Vector3d(step * static_cast<double>(i), 0, 0);
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("kitti_rpe of a trajectory against itself is zero") {
  const auto gt = straight_line(1001);
  const auto report = kitti_rpe(gt, gt);
  CHECK(report.t_err_percent == 0.0);
  CHECK(report.r_err_deg_per_100m == 0.0);
  CHECK(report.per_length.size() == 8);  // 100..800 all populated
}

TEST_CASE("kitti_rpe golden drift: 1% along the motion axis") {
  const auto gt = straight_line(1001);
  std::vector<Pose> est = gt;
  for (auto& p : est) p.translation *= 1.01;
  const auto report = kitti_rpe(gt, est);
  CHECK(report.t_err_percent == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(report.r_err_deg_per_100m == doctest::Approx(0.0));
  for (const auto& bucket : report.per_length)
    CHECK(bucket.t_err_percent == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kitti_rpe on a 150 m trajectory populates only the 100 m bucket") {
  const auto gt = straight_line(151);
  const auto report = kitti_rpe(gt, gt);
  REQUIRE(report.per_length.size() == 1);
  CHECK(report.per_length[0].length == 100.0);
  CHECK(report.per_length[0].segments > 0);
}

TEST_CASE("kitti_rpe error paths") {
  const auto gt = straight_line(50);  // 49 m: no 100 m segment
  CHECK_THROWS_AS(kitti_rpe(gt, gt), TrajectoryTooShort);
  const auto longer = straight_line(51);
  CHECK_THROWS_AS(kitti_rpe(gt, longer), TrajectoryLengthMismatch);
  CHECK_THROWS_AS(kitti_rpe(straight_line(1), straight_line(1)),
                  TrajectoryTooShort);
}

TEST_CASE("kitti_rpe is invariant to a common rigid alignment") {
  Rng rng(701);
  auto gt = straight_line(600);
  // Bend the estimate: small yaw drift per frame plus translation noise.
  std::vector<Pose> est = gt;
  for (std::size_t i = 0; i < est.size(); ++i) {
    est[i].rotation =
        so3_exp(Eigen::Vector3d(0, 0, 1e-4 * static_cast<double>(i)));
    est[i].translation += 0.02 * rng.unit_vector();
  }
  const auto base = kitti_rpe(gt, est);

  const Pose g = test::random_pose(rng, 2.0, 100.0);
  std::vector<Pose> gt_moved, est_moved;
  for (const auto& p : gt) gt_moved.push_back(compose(g, p));
  for (const auto& p : est) est_moved.push_back(compose(g, p));
  const auto moved = kitti_rpe(gt_moved, est_moved);
  CHECK(moved.t_err_percent ==
        doctest::Approx(base.t_err_percent).epsilon(1e-9));
  CHECK(moved.r_err_deg_per_100m ==
        doctest::Approx(base.r_err_deg_per_100m).epsilon(1e-9));
}

TEST_CASE("pair_metrics closed forms") {
  const Pose identity;
  const auto same = pair_metrics(identity, identity);
  CHECK(same.rte_cm == 0.0);
  CHECK(same.rre_deg == 0.0);
  CHECK(same.success);

  Pose offset;
  offset.translation = Eigen::Vector3d(0.05, 0, 0);
  const auto shifted = pair_metrics(identity, offset, 200.0, 5.0);
  CHECK(shifted.rte_cm == doctest::Approx(5.0));
  CHECK(shifted.rre_deg == doctest::Approx(0.0));
  CHECK(shifted.success);

  Pose rotated;
  rotated.rotation = so3_exp(Eigen::Vector3d(0, 0, 10.0 * M_PI / 180.0));
  const auto turned = pair_metrics(identity, rotated, 200.0, 5.0);
  CHECK(turned.rre_deg == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(!turned.success);
}

TEST_CASE("pair_metrics rre is symmetric in its arguments") {
  Rng rng(703);
  for (int i = 0; i < 20; ++i) {
    const Pose a = test::random_pose(rng, 3.0, 5.0);
    const Pose b = test::random_pose(rng, 3.0, 5.0);
    CHECK(pair_metrics(a, b).rre_deg ==
          doctest::Approx(pair_metrics(b, a).rre_deg).epsilon(1e-9));
  }
}

TEST_CASE("fmr counts pairs by inlier ratio with >= at the boundary") {
  Rng rng(707);
  const Pose gt = test::random_pose(rng, 1.0, 5.0);

  const auto make_pair = [&](double inlier_ratio, std::size_t n) {
    FmrPair pair;
    pair.gt_pose = gt;
    const auto inliers = static_cast<std::size_t>(
        std::round(inlier_ratio * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d p = rng.uniform_vector(-10.0, 10.0);
      if (i < inliers) {
        pair.dst.push_back(gt.apply(p));  // exact inlier
      } else {
        pair.dst.push_back(gt.apply(p) + 5.0 * rng.unit_vector());
      }
      pair.src.push_back(p);
    }
    return pair;
  };

  SUBCASE("all-exact matches give recall 1") {
    std::vector<FmrPair> pairs = {make_pair(1.0, 50), make_pair(1.0, 80)};
    CHECK(fmr(pairs, 0.1, 0.5) == 1.0);
  }

  SUBCASE("boundary ratio counts as matched") {
    std::vector<FmrPair> pairs = {make_pair(0.2, 50)};
    CHECK(fmr(pairs, 0.1, 0.2) == 1.0);
  }

  SUBCASE("planted ratios 0.1/0.3/0.9 at tau2 = 0.2 give 2/3") {
    std::vector<FmrPair> pairs = {make_pair(0.1, 100), make_pair(0.3, 100),
                                  make_pair(0.9, 100)};
    CHECK(fmr(pairs, 0.1, 0.2) == doctest::Approx(2.0 / 3.0));
  }

  SUBCASE("monotone in tau1, antitone in tau2") {
    std::vector<FmrPair> pairs;
    for (int k = 1; k <= 9; ++k) pairs.push_back(make_pair(0.1 * k, 60));
    double prev = -1.0;
    for (double tau1 : {0.01, 0.1, 1.0, 6.0}) {
      const double r = fmr(pairs, tau1, 0.35);
      CHECK(r >= prev);
      prev = r;
    }
    prev = 2.0;
    for (double tau2 : {0.05, 0.2, 0.5, 0.8}) {
      const double r = fmr(pairs, 0.1, tau2);
      CHECK(r <= prev);
      prev = r;
    }
  }

  SUBCASE("empty pair list throws") {
    CHECK_THROWS_AS(fmr({}, 0.1, 0.2), EmptyPairList);
  }
}
