#include "core/cluster.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "core/error.hpp"

namespace mcl {

std::size_t ClusterAssignment::outliers() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kOutlier));
}

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(K);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kOutlier) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

ClusterAssignment dbscan(const DistanceMatrix& dm, double eps, std::size_t min_pts) {
  require(std::isfinite(eps) && eps >= 0.0, "eps must be finite and >= 0");
  require(min_pts >= 1, "min_pts must be >= 1");
  const std::size_t n = dm.n();
  const float thresh = static_cast<float>(eps);

  std::vector<std::vector<std::uint32_t>> neighbors(n);
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = dm.row(i);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && row[j] <= thresh) neighbors[i].push_back(static_cast<std::uint32_t>(j));
    core[i] = neighbors[i].size() >= min_pts;
  }

  ClusterAssignment out;
  out.labels.assign(n, ClusterAssignment::kOutlier);
  std::vector<std::uint32_t> frontier;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || out.labels[seed] != ClusterAssignment::kOutlier) continue;
    const int id = static_cast<int>(out.K++);
    out.labels[seed] = id;
    frontier.assign(1, static_cast<std::uint32_t>(seed));
    while (!frontier.empty()) {
      const std::uint32_t p = frontier.back();
      frontier.pop_back();
      for (std::uint32_t q : neighbors[p]) {
        if (out.labels[q] != ClusterAssignment::kOutlier) continue;
        out.labels[q] = id;
        if (core[q]) frontier.push_back(q);
      }
    }
  }
  return out;
}

ClusteringPass cluster_embeddings(const Matrix& embeddings, const ClusteringParams& params) {
  const std::size_t n = static_cast<std::size_t>(embeddings.rows());
  require(n >= 2, "clustering needs at least two points");
  const std::uint64_t before = allocated_entries();
  const auto t0 = std::chrono::steady_clock::now();

  NeighborSets sets;
  {
    DistanceMatrix cosine = pairwise_cosine_distance(embeddings, params.threads);
    sets = knn(cosine, std::min(params.k, n - 1), params.threads);
  }
  k_reciprocal_sets(sets);
  ClusteringPass pass;
  {
    DistanceMatrix jac = jaccard_distance(sets.reciprocal, params.include_self);
    pass.assignment = dbscan(jac, params.eps, params.min_pts);
  }
  pass.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  pass.entries = allocated_entries() - before;
  return pass;
}

}  // namespace mcl
