#include "generators.hpp"
#include "oracles.hpp"

#include "mprf/binary_io.hpp"
#include "mprf/retrieval.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <thread>

using namespace mprf;
using namespace mprf::retrieval;
using mprf::testing::Gen;

namespace {

aggregation::GlobalDescriptor global(const Eigen::VectorXd& v) { return {v.normalized(), false}; }
aggregation::RefinementDescriptor refine(const Eigen::VectorXd& v) { return {v.normalized(), false}; }

struct Collection {
  std::vector<Eigen::VectorXd> rows;
  std::vector<FrameId> ids;
};

Collection random_collection(Gen& g, int n, int dim) {
  Collection c;
  for (int i = 0; i < n; ++i) {
    c.rows.push_back(g.unit(dim));
    c.ids.push_back(static_cast<FrameId>(1000 + 7 * i));
  }
  return c;
}

DescriptorIndex exact_index(const Collection& c) {
  DescriptorIndex index;
  for (std::size_t i = 0; i < c.rows.size(); ++i) index.add(c.ids[i], c.rows[i]);
  index.freeze();
  return index;
}

}  // namespace

TEST_CASE("index_add") {
  DescriptorIndex index;
  const Eigen::VectorXd v = Eigen::Vector3d(1, 2, 2).normalized();
  index.add(4, global(v));
  CHECK(index.size() == 1);
  CHECK(index.dim() == 3);
  const auto hit = index.search_topk(v, 1);
  REQUIRE(hit.size() == 1);
  CHECK(hit[0].frame_id == 4);
  CHECK(hit[0].score == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(index.add(4, global(Eigen::Vector3d(0, 1, 0))), std::invalid_argument);
  CHECK_THROWS_AS(index.add(5, aggregation::GlobalDescriptor{Eigen::Vector3d::Zero(), true}), std::invalid_argument);
  CHECK_THROWS_AS(index.add(6, Eigen::VectorXd(Eigen::Vector3d(1, 1, 0))), std::invalid_argument);
  CHECK_THROWS_AS(index.add(7, Eigen::VectorXd(Eigen::Vector2d(1, 0))), std::invalid_argument);
  index.freeze();
  CHECK_THROWS_AS(index.add(8, global(Eigen::Vector3d(0, 0, 1))), std::logic_error);

  Gen g(1);
  DescriptorIndex many;
  for (int i = 0; i < 37; ++i) many.add(static_cast<FrameId>(i), g.unit(5));
  CHECK(many.size() == 37);
}

TEST_CASE("search_topk") {
  Gen g(2);
  const auto c = random_collection(g, 50, 8);
  const auto index = exact_index(c);

  SUBCASE("stored entry comes first") {
    const auto list = index.search_topk(c.rows[17], 3);
    CHECK(list[0].frame_id == c.ids[17]);
    CHECK(list[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("k beyond the index returns the full ranking") {
    const auto list = index.search_topk(c.rows[0], 500);
    CHECK(list.size() == 50);
    CHECK(std::is_sorted(list.begin(), list.end(),
                         [](const auto& a, const auto& b) { return a.score > b.score; }));
  }
  SUBCASE("ties by ascending id") {
    DescriptorIndex tied;
    const Eigen::VectorXd v = Eigen::Vector2d(1, 0);
    for (FrameId id : {9, 3, 5}) tied.add(id, v);
    const auto list = tied.search_topk(v, 3);
    CHECK(list[0].frame_id == 3);
    CHECK(list[1].frame_id == 5);
    CHECK(list[2].frame_id == 9);
  }
  SUBCASE("exclusion") {
    const auto list = index.search_topk(c.rows[3], 50, [&](FrameId id) { return id < 1100; });
    for (const auto& s : list) CHECK(s.frame_id >= 1100);
    CHECK(list.size() == static_cast<std::size_t>(std::count_if(c.ids.begin(), c.ids.end(),
                                                                  [](FrameId id) { return id >= 1100; })));
  }
  SUBCASE("errors") {
    DescriptorIndex empty;
    CHECK_THROWS_AS((void)empty.search_topk(Eigen::Vector2d(1, 0), 1), std::runtime_error);
    CHECK_THROWS_AS((void)index.search_topk(c.rows[0], 0), std::invalid_argument);
  }
}

TEST_CASE("exact search agrees with a linear scan") {
  Gen g(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = g.integer(1, 300);
    const int dim = g.integer(2, 40);
    const auto c = random_collection(g, n, dim);
    const auto index = exact_index(c);
    for (int q = 0; q < 5; ++q) {
      const auto query = g.unit(dim);
      const int k = g.integer(1, 20);
      const auto got = index.search_topk(query, k);
      const auto want = mprf::testing::linear_scan_topk(c.rows, c.ids, query, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].frame_id == want[i].frame_id);
        CHECK(std::abs(got[i].score - want[i].score) < 1e-6);
      }
    }
  }
}

TEST_CASE("inverted-file mode") {
  Gen g(4);
  const auto c = random_collection(g, 400, 12);
  const auto exact = exact_index(c);

  DescriptorIndex ivf(IndexMode::kInvertedFile, {16, 16});
  for (std::size_t i = 0; i < c.rows.size(); ++i) ivf.add(c.ids[i], c.rows[i]);
  CHECK_THROWS_AS((void)ivf.search_topk(c.rows[0], 5), std::logic_error);
  ivf.train_lists(5);
  ivf.freeze();
  for (int q = 0; q < 20; ++q) {
    const auto query = g.unit(12);
    CHECK(ivf.search_topk(query, 10) == exact.search_topk(query, 10));
  }

  SUBCASE("probing fewer lists returns a subset of true scores") {
    ivf.set_n_probe(2);
    const auto query = c.rows[11];
    const auto list = ivf.search_topk(query, 10);
    REQUIRE_FALSE(list.empty());
    CHECK(list[0].frame_id == c.ids[11]);
    std::set<FrameId> seen;
    for (const auto& s : list) CHECK(seen.insert(s.frame_id).second);
  }
}

TEST_CASE("frozen index answers concurrent queries identically") {
  Gen g(5);
  const auto c = random_collection(g, 500, 16);
  const auto index = exact_index(c);
  std::vector<Eigen::VectorXd> queries;
  for (int i = 0; i < 40; ++i) queries.push_back(g.unit(16));
  std::vector<Shortlist> serial;
  for (const auto& q : queries) serial.push_back(index.search_topk(q, 10));

  std::vector<std::vector<Shortlist>> parallel(4, std::vector<Shortlist>(queries.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < parallel.size(); ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = 0; i < queries.size(); ++i) parallel[t][i] = index.search_topk(queries[i], 10);
      });
    }
  }
  for (const auto& run : parallel) CHECK(run == serial);
}

TEST_CASE("two_stage_retrieve") {
  Gen g(6);
  SUBCASE("n1 = n2 = 1 keeps the stage-one winner") {
    const auto c = random_collection(g, 20, 6);
    const auto index = exact_index(c);
    RefinementStore store;
    for (std::size_t i = 0; i < c.ids.size(); ++i) store.add(c.ids[i], refine(g.unit(9)));
    const auto q = global(c.rows[4]);
    const auto list = two_stage_retrieve(q, refine(g.unit(9)), index, store, 1, 1);
    REQUIRE(list.size() == 1);
    CHECK(list[0].frame_id == c.ids[4]);
  }
  SUBCASE("equal global scores, separable refinement") {
    DescriptorIndex index;
    const Eigen::VectorXd v = Eigen::Vector2d(1, 0);
    index.add(1, v);
    index.add(2, v);
    index.freeze();
    RefinementStore store;
    const Eigen::VectorXd r1 = Eigen::Vector3d(1, 1, 0).normalized();
    const Eigen::VectorXd r2 = Eigen::Vector3d(1, 0, 0);
    store.add(1, refine(r1));
    store.add(2, refine(r2));
    const Eigen::VectorXd qr = Eigen::Vector3d(1, 0.1, 0).normalized();
    const auto list = two_stage_retrieve(global(v), refine(qr), index, store, 2, 2);
    REQUIRE(list.size() == 2);
    CHECK(list[0].frame_id == 2);
    CHECK(list[0].score == doctest::Approx(qr.dot(r2)));
    CHECK(list[1].score == doctest::Approx(qr.dot(r1)));
  }
  SUBCASE("output is a subset of stage one and respects exclusion") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto c = random_collection(g, 80, 10);
      const auto index = exact_index(c);
      RefinementStore store;
      for (const auto id : c.ids) store.add(id, refine(g.unit(7)));
      const auto qg = global(g.unit(10));
      const auto qr = refine(g.unit(7));
      const ExcludeFn exclude = [](FrameId id) { return id % 2 == 0; };
      const auto stage1 = index.search_topk(qg.values, 15, exclude);
      const auto list = two_stage_retrieve(qg, qr, index, store, 15, 6, exclude);
      CHECK(list.size() == 6);
      for (const auto& s : list) {
        CHECK(s.frame_id % 2 == 1);
        CHECK(std::any_of(stage1.begin(), stage1.end(), [&](const auto& x) { return x.frame_id == s.frame_id; }));
      }
    }
  }
  SUBCASE("errors") {
    const auto c = random_collection(g, 5, 4);
    const auto index = exact_index(c);
    RefinementStore store;
    const auto qg = global(c.rows[0]);
    const auto qr = refine(g.unit(3));
    CHECK_THROWS_AS(two_stage_retrieve(qg, qr, index, store, 2, 3), std::invalid_argument);
    CHECK_THROWS_AS(two_stage_retrieve(qg, qr, index, store, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(two_stage_retrieve(qg, qr, index, store, 2, 2), std::runtime_error);
  }
}

TEST_CASE("index and refinement store persistence") {
  Gen g(7);
  const auto c = random_collection(g, 30, 6);
  const auto index = exact_index(c);
  std::stringstream buf;
  write_index(buf, index);
  CHECK(buf.str().size() == 5 + 8 + 30 * (8 + 4 + 4 * 6));
  const auto back = read_index(buf);
  CHECK(back.size() == 30);
  CHECK(back.ids() == index.ids());
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK((back.descriptor(i) - index.descriptor(i)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(back.descriptor(i).norm() - 1.0) < 1e-12);
  }

  RefinementStore store;
  for (const auto id : c.ids) store.add(id, refine(g.unit(5)));
  std::stringstream sbuf;
  write_refinement_store(sbuf, store);
  CHECK(static_cast<unsigned char>(sbuf.str()[4]) == static_cast<unsigned char>(io::RecordType::kRefinementStore));
  const auto sback = read_refinement_store(sbuf);
  CHECK(sback.ids() == store.ids());
  CHECK((sback.find(c.ids[3])->values - store.find(c.ids[3])->values).cwiseAbs().maxCoeff() < 1e-6);

  std::stringstream wrong(sbuf.str());
  CHECK_THROWS_AS(read_index(wrong), io::FormatError);
}

TEST_CASE("refinement store") {
  RefinementStore store;
  store.add(3, refine(Eigen::Vector2d(1, 0)));
  CHECK(store.find(3) != nullptr);
  CHECK(store.find(4) == nullptr);
  CHECK_THROWS_AS(store.add(3, refine(Eigen::Vector2d(0, 1))), std::invalid_argument);
}
