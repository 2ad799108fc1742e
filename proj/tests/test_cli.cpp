#include <doctest.h>

#include <filesystem>
#include <iostream>
#include <iterator>
#include <fstream>
#include <sstream>

#include "kelo/cli.hpp"
#include "kelo/io.hpp"
#include "support/synthetic.hpp"

using namespace kelo;

namespace {

struct CliResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"kelo"};
  for (const auto& a : args) argv.push_back(a.c_str());

  std::ostringstream captured_out, captured_err;
  auto* old_out = std::cout.rdbuf(captured_out.rdbuf());
  auto* old_err = std::cerr.rdbuf(captured_err.rdbuf());
  CliResult result;
  result.exit_code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  result.out = captured_out.str();
  result.err = captured_err.str();
  return result;
}

std::filesystem::path temp_dir(const std::string& leaf) {
  const auto dir = std::filesystem::temp_directory_path() / "kelo_cli_tests" / leaf;
  std::filesystem::create_directories(dir);
  return dir;
}

void write_scan_file(const std::filesystem::path& path,
                     const std::vector<Eigen::Vector3d>& pts) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& p : pts) {
    const float rec[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z()), 0.0f};
    out.write(reinterpret_cast<const char*>(rec), 16);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("help exits 0, unknown flags and commands exit 1") {
  CHECK(run_cli({"--help"}).exit_code == 0);
  CHECK(run_cli({"eval-rpe", "--help"}).exit_code == 0);
  CHECK(run_cli({"--bogus"}).exit_code == 1);
  CHECK(run_cli({"no-such-command"}).exit_code == 1);
  CHECK(run_cli({"eval-rpe", "a.txt", "b.txt", "--frobnicate"}).exit_code == 1);
  CHECK(run_cli({}).exit_code == 1);  // a subcommand is required
}

TEST_CASE("eval-rpe golden and mismatch paths") {
  const auto dir = temp_dir("evalrpe");
  std::vector<Pose> gt;
  for (int i = 0; i <= 1000; ++i) {
    Pose p;
    p.translation = Eigen::Vector3d(i, 0, 0);
    gt.push_back(p);
  }
  std::vector<Pose> est = gt;
  for (auto& p : est) p.translation *= 1.01;
  write_poses(dir / "gt.txt", gt);
  write_poses(dir / "est.txt", est);

  SUBCASE("est = gt gives zero errors") {
    const auto result =
        run_cli({"eval-rpe", (dir / "gt.txt").string(), (dir / "gt.txt").string()});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("t_err=0.000000 r_err=0.000000") != std::string::npos);
  }

  SUBCASE("1% drift reports t_err = 1") {
    const auto result = run_cli(
        {"eval-rpe", (dir / "gt.txt").string(), (dir / "est.txt").string()});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("t_err=1.000000") != std::string::npos);
  }

  SUBCASE("length mismatch exits 1") {
    write_poses(dir / "short.txt", std::span(gt.data(), 500));
    const auto result = run_cli(
        {"eval-rpe", (dir / "gt.txt").string(), (dir / "short.txt").string()});
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("lengths differ") != std::string::npos);
  }
}

TEST_CASE("eval-pair reports per-pair metrics and recall") {
  const auto dir = temp_dir("evalpair");
  std::vector<Pose> gt(2);
  std::vector<Pose> est = gt;
  est[0].translation = Eigen::Vector3d(0.05, 0, 0);              // 5 cm: pass
  est[1].rotation = so3_exp(Eigen::Vector3d(0, 0, 10 * M_PI / 180.0));  // fail
  write_poses(dir / "gt.txt", gt);
  write_poses(dir / "est.txt", est);
  const auto result = run_cli(
      {"eval-pair", (dir / "gt.txt").string(), (dir / "est.txt").string()});
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("pair 0: rte=5.000 rre=0.0000 success=1") !=
        std::string::npos);
  CHECK(result.out.find("success=0") != std::string::npos);
  CHECK(result.out.find("rr=0.500000 pairs=2") != std::string::npos);
}

TEST_CASE("register-pair on identical scans returns the identity") {
  Rng rng(801);
  const auto dir = temp_dir("regpair");
  const auto pts = test::structured_scene(rng, 1500);
  write_scan_file(dir / "a.bin", pts);
  write_scan_file(dir / "b.bin", pts);

  const auto result = run_cli({"register-pair", (dir / "a.bin").string(),
                               (dir / "b.bin").string()});
  CHECK(result.exit_code == 0);
  // First line is the 12-float pose; expect the identity.
  std::istringstream lines(result.out);
  std::string pose_line;
  REQUIRE(std::getline(lines, pose_line));
  std::istringstream fields(pose_line);
  std::vector<double> values{std::istream_iterator<double>(fields),
                             std::istream_iterator<double>()};
  REQUIRE(values.size() == 12);
  const double expected[12] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  for (int i = 0; i < 12; ++i)
    CHECK(values[i] == doctest::Approx(expected[i]).epsilon(1e-6));

  std::string stats_line;
  REQUIRE(std::getline(lines, stats_line));
  CHECK(stats_line.find("inliers=") != std::string::npos);
  CHECK(stats_line.find("candidates=") != std::string::npos);
  // Identical scans: every candidate is an inlier.
  std::size_t inliers = 0, candidates = 0;
  std::sscanf(stats_line.c_str(), "inliers=%zu candidates=%zu", &inliers,
              &candidates);
  CHECK(inliers == candidates);
  CHECK(candidates > 100);
}

TEST_CASE("register-pair on disjoint scenes exits 2") {
  Rng rng(803);
  const auto dir = temp_dir("regpair_disjoint");
  write_scan_file(dir / "a.bin", test::random_points_in_cube(rng, 300, 5.0));
  auto far = test::random_points_in_cube(rng, 300, 5.0);
  for (auto& p : far) p += Eigen::Vector3d(500, 0, 0);
  write_scan_file(dir / "b.bin", far);
  const auto result = run_cli({"register-pair", (dir / "a.bin").string(),
                               (dir / "b.bin").string(),
                               "--ransac-max-iterations", "500"});
  CHECK(result.exit_code == 2);
}

TEST_CASE("losses-check prints the three losses") {
  Rng rng(807);
  const auto dir = temp_dir("losses");
  // Identical clouds with perfectly discriminative one-hot descriptors.
  const auto pts = test::random_points_in_cube(rng, 24, 4.0);
  write_scan_file(dir / "a.bin", pts);
  write_scan_file(dir / "b.bin", pts);

  FeatureSet fs;
  fs.descriptors = Eigen::MatrixXd::Zero(static_cast<std::int64_t>(pts.size()), 32);
  fs.saliency.resize(static_cast<std::int64_t>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    fs.descriptors(static_cast<std::int64_t>(i),
                   static_cast<std::int64_t>(i % 32)) = 1.0;
    fs.saliency(static_cast<std::int64_t>(i)) = 0.5;
  }
  write_features(dir / "a.kddf", fs);
  write_features(dir / "b.kddf", fs);
  write_poses(dir / "gt.txt", std::vector<Pose>{Pose{}});

  const auto result = run_cli(
      {"losses-check", (dir / "a.bin").string(), (dir / "b.bin").string(),
       (dir / "a.kddf").string(), (dir / "b.kddf").string(),
       (dir / "gt.txt").string(), "--r-positive", "0.1", "--r-negative", "0.5"});
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("contrastive=0\n") != std::string::npos);
  CHECK(result.out.find("detection=") != std::string::npos);
  CHECK(result.out.find("mean_matchability=") != std::string::npos);

  SUBCASE("non-overlapping clouds exit 1") {
    auto far = pts;
    for (auto& p : far) p += Eigen::Vector3d(100, 0, 0);
    write_scan_file(dir / "far.bin", far);
    write_features(dir / "far.kddf", fs);
    const auto bad = run_cli(
        {"losses-check", (dir / "a.bin").string(), (dir / "far.bin").string(),
         (dir / "a.kddf").string(), (dir / "far.kddf").string(),
         (dir / "gt.txt").string()});
    CHECK(bad.exit_code == 1);
  }
}

TEST_CASE("config file handling: unknown key and malformed line exit 1") {
  const auto dir = temp_dir("config");
  write_scan_file(dir / "000000.bin", {{1, 1, 1}, {2, 2, 2}, {1, 2, 1}});

  std::ofstream(dir / "bad_key.cfg") << "voxel_size = 1.0\nbogus_key = 3\n";
  auto result = run_cli({"run-odometry", dir.string(), "--config",
                         (dir / "bad_key.cfg").string(), "--out-trajectory",
                         (dir / "traj.txt").string()});
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("bogus_key") != std::string::npos);

  std::ofstream(dir / "malformed.cfg") << "voxel_size\n";
  result = run_cli({"run-odometry", dir.string(), "--config",
                    (dir / "malformed.cfg").string(), "--out-trajectory",
                    (dir / "traj.txt").string()});
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("key = value") != std::string::npos);

  std::ofstream(dir / "bad_value.cfg") << "alpha = 2.0\n";  // out of (0, 1]
  result = run_cli({"run-odometry", dir.string(), "--config",
                    (dir / "bad_value.cfg").string(), "--out-trajectory",
                    (dir / "traj.txt").string()});
  CHECK(result.exit_code == 1);
}

TEST_CASE("run-odometry writes a trajectory and is byte-deterministic") {
  Rng rng(811);
  const auto dir = temp_dir("runodo");
  const auto scans = temp_dir("runodo/scans");
  Rng scene_rng(812);
  auto scene = test::structured_scene(scene_rng, 1200);
  write_scan_file(scans / "000000.bin", scene);
  for (auto& p : scene) p += Eigen::Vector3d(0.1, 0.05, 0.0);
  write_scan_file(scans / "000001.bin", scene);

  std::ofstream(dir / "pipeline.cfg")
      << "voxel_size = 0.4\nmin_range = 0.5\nkeep_fraction = 1.0\n";

  const auto traj1 = dir / "traj1.txt";
  const auto report1 = dir / "report1.txt";
  auto result = run_cli({"run-odometry", scans.string(), "--config",
                         (dir / "pipeline.cfg").string(), "--out-trajectory",
                         traj1.string(), "--out-report", report1.string()});
  REQUIRE(result.exit_code == 0);

  const auto poses = read_poses(traj1);
  REQUIRE(poses.size() == 2);
  CHECK(poses[0].translation.norm() == 0.0);

  const auto report_text = read_file(report1);
  CHECK(report_text.find("scans = 2") != std::string::npos);
  CHECK(report_text.find("mean_wall_ms") != std::string::npos);
  CHECK(report_text.find("mean_memory_kb") != std::string::npos);

  const auto traj2 = dir / "traj2.txt";
  result = run_cli({"run-odometry", scans.string(), "--config",
                    (dir / "pipeline.cfg").string(), "--out-trajectory",
                    traj2.string()});
  REQUIRE(result.exit_code == 0);
  CHECK(read_file(traj1) == read_file(traj2));
}

TEST_CASE("map-export emits point and surfel records") {
  const auto dir = temp_dir("mapexport");
  const auto scans = temp_dir("mapexport/scans");
  // A dense floor grid: fills 1 m voxels past n_max so surfels appear.
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      pts.push_back({2.0 + 0.15 * i, 2.0 + 0.15 * j, 0.0});
  write_scan_file(scans / "000000.bin", pts);

  const auto out = dir / "map.txt";
  const auto result = run_cli({"map-export", scans.string(), "--out",
                               out.string(), "--min-range", "0.1",
                               "--feature-radius", "0.8"});
  REQUIRE(result.exit_code == 0);
  const auto text = read_file(out);
  CHECK(text.find("\nS ") != std::string::npos);
  CHECK((text.find("P ") == 0 || text.find("\nP ") != std::string::npos));
}

TEST_CASE("fmr-sweep over a manifest") {
  Rng rng(813);
  const auto dir = temp_dir("fmr");
  const auto pts = test::random_points_in_cube(rng, 64, 5.0);
  write_scan_file(dir / "a.bin", pts);
  write_scan_file(dir / "b.bin", pts);
  FeatureSet fs;
  fs.descriptors = Eigen::MatrixXd::Zero(64, 64);
  fs.saliency = Eigen::VectorXd::Constant(64, 0.5);
  for (int i = 0; i < 64; ++i) fs.descriptors(i, i) = 1.0;
  write_features(dir / "a.kddf", fs);
  write_features(dir / "b.kddf", fs);
  write_poses(dir / "gt.txt", std::vector<Pose>{Pose{}});
  std::ofstream(dir / "pairs.txt")
      << (dir / "a.bin").string() << ' ' << (dir / "b.bin").string() << ' '
      << (dir / "a.kddf").string() << ' ' << (dir / "b.kddf").string() << ' '
      << (dir / "gt.txt").string() << '\n';

  const auto result = run_cli({"fmr-sweep", "--pairs",
                               (dir / "pairs.txt").string(), "--tau1", "0.1",
                               "--tau2", "0.2"});
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("fmr,0.1,0.2,1.000000") != std::string::npos);
}
