#include "generators.hpp"
#include "oracles.hpp"

#include "mprf/aggregation.hpp"
#include "mprf/binary_io.hpp"
#include "mprf/kmeans.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace mprf;
using namespace mprf::aggregation;
using mprf::testing::Gen;

namespace {

ClusterBank random_bank(Gen& g, int k, int d_in, int d_proj) {
  ClusterBank bank;
  bank.centers = g.matrix(k, d_in);
  bank.projection = g.matrix(d_in, d_proj);
  return bank;
}

// `k` tight blobs far apart; returns samples and the exact blob means.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> separated_blobs(Gen& g, int k, int per, int dim) {
  Eigen::MatrixXd samples(k * per, dim);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, dim);
  for (int c = 0; c < k; ++c) {
    const Eigen::VectorXd centre = 100.0 * g.unit(dim) * (c + 1);
    for (int i = 0; i < per; ++i) {
      samples.row(c * per + i) = (centre + g.vector(dim, -0.5, 0.5)).transpose();
      means.row(c) += samples.row(c * per + i) / per;
    }
  }
  return {samples, means};
}

}  // namespace

TEST_CASE("kmeans on separated blobs") {
  Gen g(1);
  const auto [samples, means] = separated_blobs(g, 5, 40, 6);
  const auto km = kmeans(samples, 5, {100, 1e-4, 3});
  for (int c = 0; c < 5; ++c) {
    const int nearest = nearest_center(km.centers, means.row(c).transpose());
    CHECK((km.centers.row(nearest) - means.row(c)).norm() < 1e-6);
  }
  CHECK(km.iterations <= 100);
  CHECK_THROWS_AS(kmeans(samples.topRows(2), 3), std::invalid_argument);
  CHECK_THROWS_AS(kmeans(samples, 0), std::invalid_argument);
}

TEST_CASE("nearest_center ties go to the lowest index") {
  Eigen::MatrixXd centers(3, 1);
  centers << -1, 1, 1;
  CHECK(nearest_center(centers, Eigen::VectorXd::Zero(1)) == 0);
  CHECK(nearest_center(centers, Eigen::VectorXd::Constant(1, 2.0)) == 1);
}

TEST_CASE("fit_cluster_bank") {
  Gen g(2);
  SUBCASE("separated clusters recover the blob means") {
    const auto [samples, means] = separated_blobs(g, 4, 30, 8);
    const auto bank = fit_cluster_bank(samples, 4, 3, 17);
    for (int c = 0; c < 4; ++c) {
      const int nearest = nearest_center(bank.centers, means.row(c).transpose());
      CHECK((bank.centers.row(nearest) - means.row(c)).norm() < 1e-6);
    }
    CHECK(bank.dustbin_score == 0.0);
    CHECK(bank.projection.cols() == 3);
    // Principal directions are orthonormal.
    const Eigen::MatrixXd gram = bank.projection.transpose() * bank.projection;
    CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bank.projection);
    CHECK(lu.rank() == 3);
  }
  SUBCASE("K = 1 gives the sample mean") {
    const Eigen::MatrixXd samples = g.matrix(50, 4);
    const auto bank = fit_cluster_bank(samples, 1, 2, 0);
    CHECK((bank.centers.row(0) - samples.colwise().mean()).norm() < 1e-12);
  }
  SUBCASE("deterministic for a seed") {
    const Eigen::MatrixXd samples = g.matrix(200, 6);
    const auto a = fit_cluster_bank(samples, 5, 4, 99);
    const auto b = fit_cluster_bank(samples, 5, 4, 99);
    CHECK(a.centers == b.centers);
    CHECK(a.projection == b.projection);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fit_cluster_bank(g.matrix(3, 4), 4, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_cluster_bank(g.matrix(10, 4), 2, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_cluster_bank(Eigen::MatrixXd::Ones(10, 4), 2, 2, 0), std::invalid_argument);
  }
}

TEST_CASE("cluster bank file round trip") {
  Gen g(4);
  auto bank = random_bank(g, 3, 5, 2);
  bank.dustbin_score = 0.25;
  std::stringstream buf;
  write_cluster_bank(buf, bank);
  // magic + tag + K, d_in, d_proj + dustbin + payload
  CHECK(buf.str().size() == 5 + 12 + 4 + 4 * (3 * 5 + 5 * 2));
  const auto back = read_cluster_bank(buf);
  CHECK(back.clusters() == 3);
  CHECK(back.input_dim() == 5);
  CHECK(back.projected_dim() == 2);
  CHECK(back.dustbin_score == 0.25);
  CHECK((back.centers - bank.centers).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.projection - bank.projection).cwiseAbs().maxCoeff() < 1e-6);

  std::stringstream truncated(buf.str().substr(0, 40));
  CHECK_THROWS_AS(read_cluster_bank(truncated), io::FormatError);
}

TEST_CASE("score_matrix") {
  ClusterBank bank;
  bank.centers = Eigen::MatrixXd::Identity(3, 3);
  bank.projection = Eigen::MatrixXd::Identity(3, 2);
  bank.dustbin_score = -0.5;
  const Eigen::MatrixXd feats = bank.centers.row(1);
  const auto s = score_matrix(feats, bank);
  REQUIRE(s.cols() == 4);
  Eigen::Index arg = 0;
  s.row(0).leftCols(3).maxCoeff(&arg);
  CHECK(arg == 1);
  CHECK(s(0, 3) == -0.5);

  const auto zero = score_matrix(Eigen::MatrixXd::Zero(4, 3), bank);
  CHECK(zero.leftCols(3).isZero(0.0));
  CHECK_THROWS_AS(score_matrix(Eigen::MatrixXd::Zero(2, 4), bank), std::invalid_argument);
}

TEST_CASE("a constant dustbin column is absorbed by the first column step") {
  // A very large dustbin score cannot attract mass when every column must
  // carry P/(K+1): the constant column is renormalised away.
  Gen g(6);
  auto bank = random_bank(g, 4, 6, 3);
  const Eigen::MatrixXd feats = g.matrix(20, 6);
  bank.dustbin_score = 0.0;
  const auto base = sinkhorn_assign(score_matrix(feats, bank));
  bank.dustbin_score = 1e6;
  const auto huge = sinkhorn_assign(score_matrix(feats, bank));
  CHECK((base.weights - huge.weights).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(huge.weights.col(4).sum() < 0.99 * 20);
}

TEST_CASE("sinkhorn_assign examples") {
  SUBCASE("constant scores give the uniform assignment") {
    for (int k : {1, 3, 8}) {
      const auto a = sinkhorn_assign(Eigen::MatrixXd::Constant(7, k + 1, 2.5));
      CHECK((a.weights.array() - 1.0 / (k + 1)).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("P = 1, K = 1") {
    const auto a = sinkhorn_assign(Eigen::MatrixXd::Constant(1, 2, 0.3));
    CHECK(a.weights(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a.weights(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("2x2 diagonal, three iterations") {
    Eigen::MatrixXd s(2, 2);
    s << 2, 0, 0, 2;
    const auto a = sinkhorn_assign(s, {3, 1.0});
    // Step-by-step linear-domain normalisation gives e²/(e²+1) on the diagonal.
    constexpr double kDiag = 0.88079707797788231;
    constexpr double kOff = 0.11920292202211769;
    CHECK(std::abs(a.weights(0, 0) - kDiag) < 1e-9);
    CHECK(std::abs(a.weights(1, 1) - kDiag) < 1e-9);
    CHECK(std::abs(a.weights(0, 1) - kOff) < 1e-9);
    CHECK(std::abs(a.weights(1, 0) - kOff) < 1e-9);
    CHECK((a.weights - mprf::testing::sinkhorn_linear(s, 3, 1.0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("errors") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(sinkhorn_assign(s, {0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_assign(s, {3, 0.0}), std::invalid_argument);
    s(0, 0) = std::nan("");
    CHECK_THROWS_AS(sinkhorn_assign(s), std::invalid_argument);
    s(0, 0) = INFINITY;
    CHECK_THROWS_AS(sinkhorn_assign(s), std::invalid_argument);
  }
}

TEST_CASE("sinkhorn_assign properties") {
  Gen g(7);
  for (int trial = 0; trial < 150; ++trial) {
    const int p = g.integer(1, 40);
    const int k = g.integer(1, 12);
    const int iters = g.integer(1, 6);
    const double temp = g.uniform(0.1, 3.0);
    const Eigen::MatrixXd s = g.matrix(p, k + 1, -20.0, 20.0);
    const auto a = sinkhorn_assign(s, {iters, temp});

    CHECK((a.weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((a.weights.array() > 0.0).all());
    CHECK((a.weights - mprf::testing::sinkhorn_linear(s, iters, temp)).cwiseAbs().maxCoeff() < 1e-9);

    const double c = g.uniform(0.5, 5.0);
    const auto scaled = sinkhorn_assign(c * s, {iters, c * temp});
    CHECK((scaled.weights - a.weights).cwiseAbs().maxCoeff() < 1e-9);

    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    Eigen::MatrixXd sp(p, k + 1);
    for (int r = 0; r < p; ++r) sp.row(r) = s.row(perm[static_cast<std::size_t>(r)]);
    const auto ap = sinkhorn_assign(sp, {iters, temp});
    for (int r = 0; r < p; ++r) {
      CHECK((ap.weights.row(r) - a.weights.row(perm[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("aggregate_global") {
  Gen g(8);
  SUBCASE("all mass in the dustbin") {
    auto bank = random_bank(g, 2, 4, 3);
    AssignmentMatrix a{Eigen::MatrixXd::Zero(5, 3)};
    a.weights.col(2).setOnes();
    CHECK(aggregate_global(g.matrix(5, 4), a, bank).zero);
  }
  SUBCASE("P = 1, K = 1") {
    auto bank = random_bank(g, 1, 4, 3);
    const Eigen::MatrixXd f = g.matrix(1, 4);
    AssignmentMatrix a{Eigen::MatrixXd(1, 2)};
    a.weights << 1, 0;
    const auto d = aggregate_global(f, a, bank);
    const Eigen::VectorXd want = (f * bank.projection).transpose().normalized();
    CHECK((d.values - want).norm() < 1e-12);
  }
  SUBCASE("identical frames, unit norm, patch order invariance") {
    auto bank = random_bank(g, 6, 10, 4);
    const Eigen::MatrixXd f = g.matrix(30, 10);
    const auto a = compute_global_descriptor(f, bank);
    const auto b = compute_global_descriptor(f, bank);
    CHECK(a.values == b.values);
    CHECK(std::abs(a.values.norm() - 1.0) < 1e-6);
    CHECK(a.values.dot(b.values) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    Eigen::MatrixXd fp(30, 10);
    for (int r = 0; r < 30; ++r) fp.row(r) = f.row(perm[static_cast<std::size_t>(r)]);
    CHECK((compute_global_descriptor(fp, bank).values - a.values).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("one empty cluster stays zero, not NaN") {
    ClusterBank bank;
    bank.centers = Eigen::MatrixXd::Identity(2, 2);
    bank.projection = Eigen::MatrixXd::Identity(2, 2);
    AssignmentMatrix a{Eigen::MatrixXd(1, 3)};
    a.weights << 1, 0, 0;
    const auto d = aggregate_global(Eigen::MatrixXd::Constant(1, 2, 1.0), a, bank);
    CHECK(d.values.allFinite());
    CHECK(d.values.tail(2).isZero(0.0));
    CHECK_FALSE(d.zero);
  }
  SUBCASE("shape mismatch") {
    auto bank = random_bank(g, 2, 4, 3);
    AssignmentMatrix a{Eigen::MatrixXd::Zero(5, 2)};
    CHECK_THROWS_AS(aggregate_global(g.matrix(5, 4), a, bank), std::invalid_argument);
  }
}

TEST_CASE("refine_descriptor") {
  Gen g(10);
  SUBCASE("P = 1 is the normalised concatenation") {
    LayerStack l{g.matrix(1, 4), g.matrix(1, 4), g.matrix(1, 4)};
    Eigen::VectorXd cat(12);
    cat << l[0].transpose(), l[1].transpose(), l[2].transpose();
    CHECK((refine_descriptor(l).values - cat.normalized()).norm() < 1e-12);
  }
  SUBCASE("identical patches reduce to P = 1") {
    const Eigen::MatrixXd row = g.matrix(1, 5);
    LayerStack many{row.replicate(9, 1), (2 * row).replicate(9, 1), (-row).replicate(9, 1)};
    LayerStack one{row, 2 * row, -row};
    CHECK((refine_descriptor(many).values - refine_descriptor(one).values).norm() < 1e-12);
  }
  SUBCASE("random 3x4x8 against the loop oracle") {
    for (int t = 0; t < 50; ++t) {
      LayerStack l{g.matrix(4, 8), g.matrix(4, 8), g.matrix(4, 8)};
      const auto d = refine_descriptor(l);
      CHECK((d.values - mprf::testing::refine_oracle(l)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(d.values.norm() - 1.0) < 1e-6);
    }
  }
  SUBCASE("errors") {
    LayerStack empty{Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)};
    CHECK_THROWS_AS(refine_descriptor(empty), std::invalid_argument);
    LayerStack ragged{g.matrix(2, 3), g.matrix(2, 4), g.matrix(2, 3)};
    CHECK_THROWS_AS(refine_descriptor(ragged), std::invalid_argument);
    LayerStack zeros{Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3)};
    CHECK(refine_descriptor(zeros).zero);
  }
}
