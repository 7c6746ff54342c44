#include <doctest.h>

#include <random>

#include "core/error.hpp"
#include "core/geometry.hpp"
#include "support/oracles.hpp"

using namespace mcl;

namespace {

Matrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = oracle::random_unit(d, rng);
    for (std::size_t j = 0; j < d; ++j) m(i, j) = v[j];
  }
  return m;
}

DistanceMatrix from_dense(const oracle::Dense& d) {
  DistanceMatrix dm(d.size(), DistanceKind::kCosine);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j) dm.at(i, j) = static_cast<float>(d[i][j]);
  return dm;
}

oracle::Dense to_dense(const DistanceMatrix& dm) {
  oracle::Dense d(dm.n(), std::vector<double>(dm.n()));
  for (std::size_t i = 0; i < dm.n(); ++i)
    for (std::size_t j = 0; j < dm.n(); ++j) d[i][j] = dm.at(i, j);
  return d;
}

void check_symmetric_zero_diagonal(const DistanceMatrix& dm, float lo, float hi) {
  for (std::size_t i = 0; i < dm.n(); ++i) {
    REQUIRE(dm.at(i, i) == 0.0f);
    for (std::size_t j = 0; j < dm.n(); ++j) {
      REQUIRE(dm.at(i, j) == dm.at(j, i));
      REQUIRE(dm.at(i, j) >= lo);
      REQUIRE(dm.at(i, j) <= hi);
    }
  }
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("cosine distance of identical, orthogonal and antipodal vectors") {
    Matrix e(4, 2);
    e << 1, 0, 1, 0, 0, 1, -1, 0;
    const DistanceMatrix dm = pairwise_cosine_distance(e);
    CHECK(dm.at(0, 1) == 0.0f);
    CHECK(dm.at(0, 2) == doctest::Approx(1.0));
    CHECK(dm.at(0, 3) == doctest::Approx(2.0));
    CHECK(dm.kind() == DistanceKind::kCosine);
  }

  TEST_CASE("cosine distance rejects bad input") {
    Matrix e(2, 2);
    e << 1, 0, 0.5, 0;
    CHECK_THROWS_AS(pairwise_cosine_distance(e), Error);
    e << 1, 0, std::nan(""), 0;
    CHECK_THROWS_AS(pairwise_cosine_distance(e), Error);
  }

  TEST_CASE("cosine matrix matches direct dot products; threads do not change it") {
    const Matrix e = unit_rows(300, 7, 1);  // spans more than one GEMM block
    const DistanceMatrix a = pairwise_cosine_distance(e, 1);
    const DistanceMatrix b = pairwise_cosine_distance(e, 3);
    check_symmetric_zero_diagonal(a, 0.0f, 2.0f);
    for (std::size_t i = 0; i < 300; i += 13)
      for (std::size_t j = 0; j < 300; j += 7) {
        if (i == j) continue;
        CHECK(a.at(i, j) == doctest::Approx(1.0 - e.row(i).dot(e.row(j))).epsilon(1e-6));
      }
    for (std::size_t i = 0; i < 300; ++i)
      for (std::size_t j = 0; j < 300; ++j) REQUIRE(a.at(i, j) == b.at(i, j));
  }

  TEST_CASE("constructing a matrix adds exactly n^2 to the counter") {
    const auto before = allocated_entries();
    DistanceMatrix dm(37, DistanceKind::kJaccard);
    CHECK(allocated_entries() - before == 37u * 37u);
    CHECK(dm.entry_count() == 37u * 37u);
  }

  TEST_CASE("knn on a line") {
    oracle::Dense d = {{0, 1, 3}, {1, 0, 2}, {3, 2, 0}};
    const NeighborSets s = knn(from_dense(d), 1);
    CHECK(s.neighbors(0)[0] == 1);
    CHECK(s.neighbors(1)[0] == 0);
    CHECK(s.neighbors(2)[0] == 1);
  }

  TEST_CASE("knn ties go to the lower index; k >= n is an error") {
    oracle::Dense d = {{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}};
    const NeighborSets s = knn(from_dense(d), 2);
    CHECK(s.neighbors(3)[0] == 0);
    CHECK(s.neighbors(3)[1] == 1);
    CHECK(s.neighbors(0)[0] == 1);
    CHECK_THROWS_AS(knn(from_dense(d), 4), Error);
  }

  TEST_CASE("knn matches the full-sort oracle on random matrices") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 50;
      // Coarse values force many ties.
      const DistanceMatrix dm = pairwise_cosine_distance(unit_rows(n, 2 + trial % 3, rng()));
      DistanceMatrix q(n, DistanceKind::kCosine);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q.at(i, j) = std::round(dm.at(i, j) * 8.0f) / 8.0f;
      for (const DistanceMatrix* m : std::initializer_list<const DistanceMatrix*>{&dm, &q}) {
        const std::size_t k = 1 + rng() % 20;
        const NeighborSets s = knn(*m, k, 1 + trial % 2);
        const auto ref = oracle::knn(to_dense(*m), k);
        for (std::size_t i = 0; i < n; ++i) {
          auto got = s.neighbors(i);
          REQUIRE(std::vector<std::size_t>(got.begin(), got.end()) == ref[i]);
          REQUIRE(std::find(got.begin(), got.end(), i) == got.end());
        }
      }
    }
  }

  TEST_CASE("k-reciprocal sets: mutual, one-sided, and random against brute force") {
    NeighborSets s;
    s.k = 1;
    s.knn = {1, 0, 1};
    k_reciprocal_sets(s);
    CHECK(s.reciprocal[0] == std::vector<std::uint32_t>{1});
    CHECK(s.reciprocal[2].empty());

    s.knn = {1, 2, 0};
    k_reciprocal_sets(s);
    CHECK(s.reciprocal[0].empty());

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 10 + rng() % 60, k = 1 + rng() % 9;
      NeighborSets r = knn(pairwise_cosine_distance(unit_rows(n, 3, rng())), k);
      k_reciprocal_sets(r);
      std::vector<std::vector<std::size_t>> lists(n);
      for (std::size_t i = 0; i < n; ++i) lists[i].assign(r.neighbors(i).begin(), r.neighbors(i).end());
      const auto ref = oracle::reciprocal(lists);
      for (std::size_t i = 0; i < n; ++i)
        REQUIRE(std::vector<std::size_t>(r.reciprocal[i].begin(), r.reciprocal[i].end()) ==
                std::vector<std::size_t>(ref[i].begin(), ref[i].end()));
    }
  }

  TEST_CASE("jaccard set arithmetic") {
    // S(0) = {1,2,3}, S(4) = {2,3,4} without self inclusion.
    std::vector<std::vector<std::uint32_t>> sets(5);
    sets[0] = {1, 2, 3};
    sets[4] = {2, 3, 4};
    sets[1] = {2, 3, 4};
    sets[2] = {};
    sets[3] = {};
    const DistanceMatrix j = jaccard_distance(sets, false);
    CHECK(j.at(0, 4) == doctest::Approx(0.5));
    CHECK(j.at(1, 4) == 0.0f);  // identical sets
    CHECK(j.at(2, 3) == 1.0f);  // both empty
    CHECK(j.at(2, 2) == 0.0f);
    CHECK(j.kind() == DistanceKind::kJaccard);

    std::vector<std::vector<std::uint32_t>> disjoint = {{1}, {0}, {3}, {2}};
    const DistanceMatrix dj = jaccard_distance(disjoint, true);
    CHECK(dj.at(0, 2) == 1.0f);
    CHECK(dj.at(0, 1) == 0.0f);  // {0,1} vs {1,0}
  }

  TEST_CASE("jaccard distance is a bounded symmetric pseudo-metric and matches set algebra") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 20 + rng() % 40;
      NeighborSets r = knn(pairwise_cosine_distance(unit_rows(n, 4, rng())), 1 + rng() % 8);
      k_reciprocal_sets(r);
      const bool self = trial % 2 == 0;
      const DistanceMatrix j = jaccard_distance(r.reciprocal, self);
      check_symmetric_zero_diagonal(j, 0.0f, 1.0f);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          if (a == b) continue;
          std::set<std::uint32_t> sa(r.reciprocal[a].begin(), r.reciprocal[a].end());
          std::set<std::uint32_t> sb(r.reciprocal[b].begin(), r.reciprocal[b].end());
          if (self) sa.insert(static_cast<std::uint32_t>(a)), sb.insert(static_cast<std::uint32_t>(b));
          std::size_t inter = 0;
          for (auto x : sa) inter += sb.count(x);
          const std::size_t uni = sa.size() + sb.size() - inter;
          const double want = uni == 0 ? 1.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
          REQUIRE(j.at(a, b) == doctest::Approx(want).epsilon(1e-7));
        }
    }
  }
}
