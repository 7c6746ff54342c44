#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "core/geometry.hpp"
#include "core/linalg.hpp"

namespace mcl {

struct ClusterAssignment {
  static constexpr int kOutlier = -1;

  std::vector<int> labels;  // kOutlier or 0..K-1
  std::size_t K = 0;

  std::size_t outliers() const;
  // Row indices grouped per cluster id.
  std::vector<std::vector<std::size_t>> members() const;
};

// DBSCAN over a precomputed matrix. A point is core when at least min_pts
// other points lie within eps (the point itself is not counted). Cores are
// visited in ascending index; each new cluster gets the next id, and a border
// point joins the first cluster whose expansion reaches it.
ClusterAssignment dbscan(const DistanceMatrix& dm, double eps, std::size_t min_pts);

struct ClusteringParams {
  std::size_t k = 30;
  double eps = 0.7;
  std::size_t min_pts = 4;
  bool include_self = true;
  std::size_t threads = 1;
};

struct ClusteringPass {
  ClusterAssignment assignment;
  std::uint64_t entries = 0;  // pairwise entries allocated by the pass
  double seconds = 0.0;       // wall time of distances + DBSCAN
};

// cosine distances -> kNN -> k-reciprocal sets -> Jaccard -> DBSCAN. The
// cosine matrix is released before the Jaccard matrix is built. k is clamped
// to n - 1 for small inputs.
ClusteringPass cluster_embeddings(const Matrix& embeddings, const ClusteringParams& params);

}  // namespace mcl
