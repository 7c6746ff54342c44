#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "core/linalg.hpp"

namespace mcl {

enum class DistanceKind { kCosine, kJaccard };

// Dense symmetric n x n distance matrix. Values are computed in double and
// stored as 32-bit floats; constructing one adds n^2 to the global entry
// counter read by the cost profiler.
class DistanceMatrix {
 public:
  DistanceMatrix(std::size_t n, DistanceKind kind, float fill = 0.0f);

  std::size_t n() const { return n_; }
  DistanceKind kind() const { return kind_; }
  std::uint64_t entry_count() const { return std::uint64_t{n_} * n_; }

  float at(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  float& at(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * n_, n_}; }

 private:
  std::size_t n_;
  DistanceKind kind_;
  std::vector<float> data_;
};

// Total pairwise entries allocated by DistanceMatrix since process start.
std::uint64_t allocated_entries();

struct NeighborSets {
  std::size_t k = 0;
  std::vector<std::uint32_t> knn;                      // n x k, nearest first
  std::vector<std::vector<std::uint32_t>> reciprocal;  // sorted ascending

  std::size_t size() const { return k == 0 ? 0 : knn.size() / k; }
  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {knn.data() + i * k, k};
  }
};

// Entries 1 - <e_i, e_j> for unit-norm rows, clamped to [0, 2].
DistanceMatrix pairwise_cosine_distance(const Matrix& embeddings, std::size_t threads = 1);

// k smallest off-diagonal distances per row; ties go to the lower index.
NeighborSets knn(const DistanceMatrix& dm, std::size_t k, std::size_t threads = 1);

// j is kept for i iff j is in knn(i) and i is in knn(j). Fills `reciprocal`.
void k_reciprocal_sets(NeighborSets& sets);

// 1 - |S_i ∩ S_j| / |S_i ∪ S_j| with S_i = reciprocal(i) (+ {i} when
// include_self). Two empty sets are at distance 1; the diagonal is 0.
DistanceMatrix jaccard_distance(const std::vector<std::vector<std::uint32_t>>& reciprocal,
                                bool include_self = true);

}  // namespace mcl
