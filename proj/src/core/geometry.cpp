#include "core/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace mcl {
namespace {

std::atomic<std::uint64_t> g_entries{0};

constexpr std::size_t kRowBlock = 256;
constexpr std::size_t kTile = 64;

}  // namespace

DistanceMatrix::DistanceMatrix(std::size_t n, DistanceKind kind, float fill)
    : n_(n), kind_(kind), data_(n * n, fill) {
  g_entries.fetch_add(std::uint64_t{n} * n, std::memory_order_relaxed);
}

std::uint64_t allocated_entries() { return g_entries.load(std::memory_order_relaxed); }

DistanceMatrix pairwise_cosine_distance(const Matrix& embeddings, std::size_t threads) {
  const std::size_t n = static_cast<std::size_t>(embeddings.rows());
  if (!embeddings.allFinite()) fail(ErrorCode::kNumeric, "non-finite embedding");
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = embeddings.row(static_cast<Eigen::Index>(i)).norm();
    if (std::abs(norm - 1.0) > 1e-6)
      fail(ErrorCode::kInvalidArgument, "embedding row " + std::to_string(i) + " is not unit norm");
  }

  DistanceMatrix dm(n, DistanceKind::kCosine);
  const std::size_t blocks = (n + kRowBlock - 1) / kRowBlock;
  parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
    Matrix gram;
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t r0 = b * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, n - r0);
      // Only columns >= r0 are needed; the lower triangle is mirrored below.
      const std::size_t cols = n - r0;
      gram.noalias() = embeddings.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(rows)) *
                       embeddings.bottomRows(static_cast<Eigen::Index>(cols)).transpose();
      for (std::size_t r = 0; r < rows; ++r) {
        auto out = dm.row(r0 + r);
        for (std::size_t c = r; c < cols; ++c) {
          const double d = std::clamp(1.0 - gram(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 0.0, 2.0);
          out[r0 + c] = static_cast<float>(d);
        }
        out[r0 + r] = 0.0f;
      }
    }
  });

  for (std::size_t ti = 0; ti < n; ti += kTile) {
    for (std::size_t tj = ti; tj < n; tj += kTile) {
      const std::size_t ie = std::min(n, ti + kTile);
      const std::size_t je = std::min(n, tj + kTile);
      for (std::size_t i = ti; i < ie; ++i)
        for (std::size_t j = std::max(tj, i + 1); j < je; ++j) dm.at(j, i) = dm.at(i, j);
    }
  }
  return dm;
}

NeighborSets knn(const DistanceMatrix& dm, std::size_t k, std::size_t threads) {
  const std::size_t n = dm.n();
  require(k >= 1, "k must be >= 1");
  if (k >= n) fail(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " must be < n=" + std::to_string(n));

  NeighborSets sets;
  sets.k = k;
  sets.knn.resize(n * k);
  parallel_for(n, threads, [&](std::size_t i0, std::size_t i1) {
    std::vector<std::uint32_t> idx(n - 1);
    for (std::size_t i = i0; i < i1; ++i) {
      auto row = dm.row(i);
      std::size_t w = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) idx[w++] = static_cast<std::uint32_t>(j);
      auto closer = [&](std::uint32_t a, std::uint32_t b) {
        return row[a] < row[b] || (row[a] == row[b] && a < b);
      };
      std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), closer);
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), closer);
      std::copy_n(idx.begin(), k, sets.knn.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
  });
  return sets;
}

void k_reciprocal_sets(NeighborSets& sets) {
  const std::size_t n = sets.size();
  std::vector<std::vector<std::uint32_t>> sorted(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto nb = sets.neighbors(i);
    sorted[i].assign(nb.begin(), nb.end());
    std::sort(sorted[i].begin(), sorted[i].end());
  }
  sets.reciprocal.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j : sorted[i]) {
      if (std::binary_search(sorted[j].begin(), sorted[j].end(), static_cast<std::uint32_t>(i)))
        sets.reciprocal[i].push_back(j);
    }
  }
}

DistanceMatrix jaccard_distance(const std::vector<std::vector<std::uint32_t>>& reciprocal,
                                bool include_self) {
  const std::size_t n = reciprocal.size();
  std::vector<std::vector<std::uint32_t>> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    sets[i] = reciprocal[i];
    if (include_self) sets[i].push_back(static_cast<std::uint32_t>(i));
    std::sort(sets[i].begin(), sets[i].end());
    sets[i].erase(std::unique(sets[i].begin(), sets[i].end()), sets[i].end());
  }
  // members_of[m] lists every i whose set contains m.
  std::vector<std::vector<std::uint32_t>> members_of(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t m : sets[i]) members_of[m].push_back(static_cast<std::uint32_t>(i));

  DistanceMatrix dm(n, DistanceKind::kJaccard, 1.0f);
  std::vector<std::uint32_t> overlap(n, 0);
  std::vector<std::uint32_t> touched;
  for (std::size_t i = 0; i < n; ++i) {
    touched.clear();
    for (std::uint32_t m : sets[i]) {
      for (std::uint32_t j : members_of[m]) {
        if (overlap[j]++ == 0) touched.push_back(j);
      }
    }
    auto row = dm.row(i);
    for (std::uint32_t j : touched) {
      const double inter = overlap[j];
      const double uni = static_cast<double>(sets[i].size() + sets[j].size()) - inter;
      row[j] = static_cast<float>(1.0 - inter / uni);
      overlap[j] = 0;
    }
    row[i] = 0.0f;
  }
  return dm;
}

}  // namespace mcl
