#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "core/cluster.hpp"
#include "core/linalg.hpp"

namespace mcl {

struct RetrievalMetrics {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[r] = hit rate within the top r + 1

  double rank(std::size_t k) const { return cmc.empty() ? 0.0 : cmc[std::min(k, cmc.size()) - 1]; }
};

// Gallery ranked by ascending cosine distance (lower gallery index first on
// ties). AP averages precision at each relevant rank over the relevant count.
// Throws when a query identity has no gallery match.
RetrievalMetrics compute_map_cmc(const Matrix& query, const Matrix& gallery,
                                 std::span<const std::uint32_t> query_ids,
                                 std::span<const std::uint32_t> gallery_ids, std::size_t max_rank = 20);

// Evaluation split of a labelled embedding set: per identity the lowest row is
// the query and the remaining rows join the gallery.
RetrievalMetrics evaluate_retrieval(const Matrix& embeddings, std::span<const std::uint32_t> identities,
                                    std::size_t max_rank = 20);

struct ClusteringQuality {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  double ari = 0.0;
};

// Pair-counting scores; outliers count as singleton clusters. Precision is 1
// when no pair shares a predicted cluster (likewise recall for truth).
ClusteringQuality clustering_quality(std::span<const int> predicted, std::span<const std::uint32_t> truth);

// Same-label pairs sharing a ground-truth identity, over all same-label
// pairs. Negative labels are excluded. 1 when there are no such pairs.
double pair_precision(std::span<const std::int64_t> labels, std::span<const std::uint32_t> truth);

struct LabelingRecord {
  std::vector<std::int64_t> labels;
  std::vector<std::uint32_t> truth;
};

// One pair_precision value per epoch record.
std::vector<double> labeling_histogram(std::span<const LabelingRecord> epochs);

struct CostProfile {
  std::size_t n_points = 0;
  std::uint64_t distance_entries = 0;  // cosine n^2 + Jaccard n^2
  std::uint64_t peak_bytes = 0;        // distance_entries * 8
  double wall_seconds = 0.0;           // median over runs
  std::vector<double> run_seconds;
};

// Analytic entry/byte model of one clustering pass over n points.
CostProfile clustering_cost_model(std::size_t n_points);

// Runs the full clustering pass `repeats` times and records the median wall
// time. Entries come from the geometry counter and are checked against the
// analytic model.
CostProfile profile_clustering(const Matrix& embeddings, const ClusteringParams& params, std::size_t repeats = 3);

}  // namespace mcl
