#include "generators.hpp"
#include "oracles.hpp"

#include "mprf/binary_io.hpp"
#include "mprf/fusion.hpp"
#include "mprf/hungarian.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

using namespace mprf;
using namespace mprf::fusion;
using mprf::testing::Gen;

namespace {

core::CameraIntrinsics camera() {
  core::CameraIntrinsics intr;
  intr.fx = intr.fy = 100.0;
  intr.cx = intr.cy = 112.0;
  intr.width = intr.height = 224;
  return intr;
}

double assignment_total(const Eigen::MatrixXd& sim, const std::vector<int>& assign) {
  double total = 0.0;
  for (std::size_t r = 0; r < assign.size(); ++r) {
    if (assign[r] >= 0) total += sim(static_cast<Eigen::Index>(r), assign[r]);
  }
  return total;
}

bool is_injective(const std::vector<int>& assign) {
  std::set<int> seen;
  for (int c : assign) {
    if (c >= 0 && !seen.insert(c).second) return false;
  }
  return true;
}

LidarScan scan_of(const std::vector<Eigen::Vector3d>& pts, Gen& g, int dim = 4) {
  LidarScan scan;
  scan.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) scan.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  scan.descriptors = g.matrix(static_cast<int>(pts.size()), dim);
  return scan;
}

FusedPointSet fused_set(const Eigen::MatrixXd& desc) {
  FusedPointSet s;
  s.descriptors = desc;
  s.visual_dim = static_cast<int>(desc.cols());
  for (Eigen::Index i = 0; i < desc.rows(); ++i) {
    s.points.emplace_back(0, 0, static_cast<double>(i));
    s.patch_ids.push_back(static_cast<int>(i));
  }
  return s;
}

}  // namespace

TEST_CASE("solve_max_assignment examples") {
  Eigen::Matrix3d diag;
  diag << 0.9, 0.1, 0.2,
          0.3, 0.8, 0.1,
          0.0, 0.2, 0.7;
  CHECK(solve_max_assignment(diag) == std::vector<int>{0, 1, 2});

  Eigen::Matrix2d cross;
  cross << 0.5, 0.9,
           0.9, 0.5;
  CHECK(solve_max_assignment(cross) == std::vector<int>{1, 0});

  Eigen::MatrixXd wide(1, 3);
  wide << 0.1, 0.7, 0.3;
  CHECK(solve_max_assignment(wide) == std::vector<int>{1});

  Eigen::MatrixXd tall(3, 1);
  tall << 0.1, 0.7, 0.3;
  CHECK(solve_max_assignment(tall) == std::vector<int>{-1, 0, -1});

  CHECK(solve_max_assignment(Eigen::MatrixXd(0, 0)).empty());
}

TEST_CASE("solve_max_assignment matches brute force") {
  Gen g(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = g.integer(1, 6);
    const int cols = g.integer(1, 6);
    const auto sim = g.matrix(rows, cols);
    const auto assign = solve_max_assignment(sim);
    REQUIRE(assign.size() == static_cast<std::size_t>(rows));
    CHECK(is_injective(assign));
    const auto matched = std::count_if(assign.begin(), assign.end(), [](int c) { return c >= 0; });
    CHECK(matched == std::min(rows, cols));
    CHECK(std::abs(assignment_total(sim, assign) - mprf::testing::brute_force_max_assignment(sim)) < 1e-9);
  }
  SUBCASE("5 x 7 and 7 x 5") {
    const auto sim = g.matrix(5, 7);
    CHECK(std::abs(assignment_total(sim, solve_max_assignment(sim)) -
                   mprf::testing::brute_force_max_assignment(sim)) < 1e-9);
    const Eigen::MatrixXd t = sim.transpose();
    CHECK(std::abs(assignment_total(t, solve_max_assignment(t)) -
                   mprf::testing::brute_force_max_assignment(t)) < 1e-9);
  }
}

TEST_CASE("solve_max_assignment properties") {
  Gen g(32);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(2, 9);
    const int m = g.integer(2, 9);
    const auto sim = g.matrix(n, m);
    const auto assign = solve_max_assignment(sim);
    const double best = assignment_total(sim, assign);
    CHECK(mprf::testing::greedy_assignment_total(sim) <= best + 1e-12);

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    Eigen::MatrixXd shuffled(n, m);
    for (int r = 0; r < n; ++r) shuffled.row(r) = sim.row(perm[static_cast<std::size_t>(r)]);
    CHECK(std::abs(assignment_total(shuffled, solve_max_assignment(shuffled)) - best) < 1e-9);
  }
}

TEST_CASE("fuse_descriptors") {
  const auto fused = fuse_descriptors(Eigen::Vector2d(3, 4), Eigen::Vector3d(0, 0, 2));
  REQUIRE(fused);
  CHECK(fused->size() == 5);
  CHECK((*fused - (Eigen::VectorXd(5) << 0.6, 0.8, 0, 0, 1).finished()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_FALSE(fuse_descriptors(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)));
  CHECK_FALSE(fuse_descriptors(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0)));

  SUBCASE("same visual, orthogonal lidar gives cosine one half") {
    const auto a = fuse_descriptors(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0));
    const auto b = fuse_descriptors(Eigen::Vector2d(2, 2), Eigen::Vector2d(0, 5));
    CHECK(a->normalized().dot(b->normalized()) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("fused cosine is the mean of the block cosines") {
    Gen g(33);
    for (int i = 0; i < 300; ++i) {
      const auto va = g.vector(6), vb = g.vector(6), la = g.vector(3), lb = g.vector(3);
      const auto a = fuse_descriptors(va, la);
      const auto b = fuse_descriptors(vb, lb);
      const double want = 0.5 * (core::cosine_similarity(va.normalized(), vb.normalized()) +
                                 core::cosine_similarity(la.normalized(), lb.normalized()));
      CHECK(std::abs(a->normalized().dot(b->normalized()) - want) < 1e-12);
      CHECK(std::abs(a->norm() - std::sqrt(2.0)) < 1e-12);
    }
  }
}

TEST_CASE("lift_patches") {
  Gen g(34);
  const auto intr = camera();
  const PatchGrid grid;
  const Eigen::MatrixXd feats = Eigen::MatrixXd::Constant(grid.size(), 5, 1.0);

  SUBCASE("single point on the optical axis") {
    const auto scan = scan_of({{0, 0, 5}}, g);
    const auto set = lift_patches(feats, scan, intr, grid);
    REQUIRE(set.size() == 1);
    CHECK(set.patch_ids[0] == 8 * 16 + 8);
    CHECK(set.points[0].z() == doctest::Approx(5.0));
    CHECK(set.points[0].x() == doctest::Approx(0.35));
    CHECK(set.points[0].y() == doctest::Approx(0.35));
    CHECK(set.descriptors.cols() == 5 + 4);
    CHECK(set.visual_dim == 5);
  }
  SUBCASE("points behind the camera give an empty set") {
    const auto set = lift_patches(feats, scan_of({{0, 0, -5}, {1, 1, -2}}, g), intr, grid);
    CHECK(set.empty());
  }
  SUBCASE("depth is the median over the patch") {
    const double ray = 7.0 / 100.0;
    std::vector<Eigen::Vector3d> pts;
    for (double z : {2.0, 4.0, 9.0}) pts.emplace_back(ray * z, ray * z, z);
    const auto set = lift_patches(feats, scan_of(pts, g), intr, grid);
    REQUIRE(set.size() == 1);
    CHECK(set.points[0].z() == doctest::Approx(4.0));
    CHECK(set.points[0].x() == doctest::Approx(0.28));
  }
  SUBCASE("descriptor comes from the point nearest the patch centre") {
    std::vector<Eigen::Vector3d> pts = {{0.0, 0.0, 5.0}, {0.07 * 5.0, 0.07 * 5.0, 5.0}};
    auto scan = scan_of(pts, g, 2);
    scan.descriptors << 1, 0,
                        0, 1;
    const auto set = lift_patches(feats, scan, intr, grid);
    REQUIRE(set.size() == 1);
    CHECK(set.descriptors(0, 5) == doctest::Approx(0.0));
    CHECK(set.descriptors(0, 6) == doctest::Approx(1.0));
  }
  SUBCASE("zero visual features drop the patch") {
    Eigen::MatrixXd zero = feats;
    zero.row(8 * 16 + 8).setZero();
    CHECK(lift_patches(zero, scan_of({{0, 0, 5}}, g), intr, grid).empty());
  }
  SUBCASE("extrinsic is applied before projection") {
    auto shifted = intr;
    shifted.cam_from_lidar.translation = {0, 0, 3};
    const auto set = lift_patches(feats, scan_of({{0, 0, 2}}, g), shifted, grid);
    REQUIRE(set.size() == 1);
    CHECK(set.points[0].z() == doctest::Approx(5.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(lift_patches(Eigen::MatrixXd::Ones(10, 5), scan_of({{0, 0, 5}}, g), intr, grid),
                    std::invalid_argument);
    LidarScan bad = scan_of({{0, 0, 5}}, g);
    bad.points(0, 0) = std::nan("");
    CHECK_THROWS_AS(lift_patches(feats, bad, intr, grid), std::invalid_argument);
    LidarScan mismatch = scan_of({{0, 0, 5}}, g);
    mismatch.descriptors = Eigen::MatrixXd::Ones(2, 4);
    CHECK_THROWS_AS(lift_patches(feats, mismatch, intr, grid), std::invalid_argument);
  }
  SUBCASE("lifted points reproject into their patch") {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 400; ++i) pts.emplace_back(g.uniform(-3, 3), g.uniform(-3, 3), g.uniform(2, 10));
    const auto set = lift_patches(g.matrix(grid.size(), 5), scan_of(pts, g), intr, grid);
    CHECK(set.size() > 0);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto proj = core::project_to_image(set.points[i], intr);
      REQUIRE(proj.valid());
      const int patch = static_cast<int>(proj.v / 14.0) * 16 + static_cast<int>(proj.u / 14.0);
      CHECK(patch == set.patch_ids[i]);
      CHECK(std::abs(set.descriptors.row(static_cast<Eigen::Index>(i)).head(5).norm() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("match_similarity") {
  SUBCASE("diagonal") {
    Eigen::Matrix3d sim;
    sim << 0.99, 0.2, 0.1,
           0.3, 0.95, 0.0,
           0.1, 0.2, 0.5;
    const auto set = match_similarity(sim, 0.9);
    REQUIRE(set.size() == 2);
    CHECK(set.pairs[0].query_idx == 0);
    CHECK(set.pairs[0].candidate_idx == 0);
    CHECK(set.pairs[1].candidate_idx == 1);
    CHECK(set.pairs[1].similarity == 0.95);
  }
  SUBCASE("threshold stage changes the outcome") {
    Eigen::Matrix2d sim;
    sim << 0.95, 0.92,
           0.5, 0.0;
    const auto after = match_similarity(sim, 0.9, ThresholdStage::kAfterAssignment);
    REQUIRE(after.size() == 1);
    CHECK(after.pairs[0].candidate_idx == 1);
    const auto before = match_similarity(sim, 0.9, ThresholdStage::kBeforeAssignment);
    REQUIRE(before.size() == 1);
    CHECK(before.pairs[0].candidate_idx == 0);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(match_similarity(Eigen::MatrixXd(0, 3)), std::invalid_argument);
    CHECK_THROWS_AS(match_correspondences(FusedPointSet{}, fused_set(Eigen::MatrixXd::Ones(2, 2))),
                    std::invalid_argument);
  }
}

TEST_CASE("match_correspondences properties") {
  Gen g(35);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = fused_set(g.matrix(g.integer(1, 12), 6));
    const auto b = fused_set(g.matrix(g.integer(1, 12), 6));
    const auto sim = fused_similarity(a, b);
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double tau : {-1.0, 0.0, 0.3, 0.6, 0.9}) {
      for (auto stage : {ThresholdStage::kAfterAssignment, ThresholdStage::kBeforeAssignment}) {
        const auto set = match_correspondences(a, b, tau, stage);
        std::set<int> qs, cs;
        for (const auto& c : set.pairs) {
          CHECK(qs.insert(c.query_idx).second);
          CHECK(cs.insert(c.candidate_idx).second);
          CHECK(c.similarity >= tau);
          CHECK(c.similarity == sim(c.query_idx, c.candidate_idx));
        }
      }
      const auto after = match_correspondences(a, b, tau);
      CHECK(after.size() <= previous);
      previous = after.size();
    }
  }
}

TEST_CASE("scan and patch files round trip") {
  Gen g(36);
  auto scan = scan_of(g.points(25), g, 7);
  std::stringstream buf;
  write_lidar_scan(buf, scan);
  CHECK(buf.str().size() == 5 + 4 + 4 + 4 * 25 * (3 + 7));
  const auto back = read_lidar_scan(buf);
  CHECK((back.points - scan.points).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((back.descriptors - scan.descriptors).cwiseAbs().maxCoeff() < 1e-6);

  std::stringstream truncated(buf.str().substr(0, 60));
  CHECK_THROWS_AS(read_lidar_scan(truncated), io::FormatError);

  PatchLayers layers = {g.matrix(4, 3), g.matrix(4, 3)};
  std::stringstream pbuf;
  write_patch_embeddings(pbuf, layers);
  const auto pback = read_patch_embeddings(pbuf);
  REQUIRE(pback.size() == 2);
  CHECK((pback[1] - layers[1]).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(write_patch_embeddings(pbuf, {g.matrix(4, 3), g.matrix(3, 3)}), std::invalid_argument);

  std::stringstream wrong(pbuf.str());
  CHECK_THROWS_AS(read_lidar_scan(wrong), io::FormatError);
}
