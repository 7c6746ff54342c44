#include "core/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "core/error.hpp"

namespace mcl {
namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

RetrievalMetrics compute_map_cmc(const Matrix& query, const Matrix& gallery,
                                 std::span<const std::uint32_t> query_ids,
                                 std::span<const std::uint32_t> gallery_ids, std::size_t max_rank) {
  require(query_ids.size() == static_cast<std::size_t>(query.rows()), "query id count mismatch");
  require(gallery_ids.size() == static_cast<std::size_t>(gallery.rows()), "gallery id count mismatch");
  require(query.cols() == gallery.cols(), "query and gallery dimensions differ");
  require(max_rank >= 1, "max_rank must be >= 1");
  const std::set<std::uint32_t> present(gallery_ids.begin(), gallery_ids.end());
  for (std::uint32_t q : query_ids)
    if (!present.count(q)) fail(ErrorCode::kInvalidArgument, "query identity " + std::to_string(q) + " absent from gallery");

  RetrievalMetrics out;
  out.cmc.assign(max_rank, 0.0);
  const std::size_t G = gallery_ids.size();
  if (query_ids.empty()) return out;
  const Matrix sims = query * gallery.transpose();
  std::vector<std::size_t> order(G);
  for (Eigen::Index qi = 0; qi < query.rows(); ++qi) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return 1.0 - sims(qi, static_cast<Eigen::Index>(a)) < 1.0 - sims(qi, static_cast<Eigen::Index>(b));
    });
    const std::uint32_t id = query_ids[static_cast<std::size_t>(qi)];
    double hits = 0.0, ap = 0.0;
    std::size_t first_hit = G;
    for (std::size_t r = 0; r < G; ++r) {
      if (gallery_ids[order[r]] != id) continue;
      hits += 1.0;
      ap += hits / static_cast<double>(r + 1);
      if (first_hit == G) first_hit = r;
    }
    out.mAP += ap / hits;
    for (std::size_t r = first_hit; r < max_rank; ++r) out.cmc[r] += 1.0;
  }
  const double nq = static_cast<double>(query.rows());
  out.mAP /= nq;
  for (double& c : out.cmc) c /= nq;
  return out;
}

RetrievalMetrics evaluate_retrieval(const Matrix& embeddings, std::span<const std::uint32_t> identities,
                                    std::size_t max_rank) {
  require(identities.size() == static_cast<std::size_t>(embeddings.rows()), "identity count mismatch");
  std::set<std::uint32_t> seen;
  std::vector<Eigen::Index> q_rows, g_rows;
  std::vector<std::uint32_t> q_ids, g_ids;
  for (std::size_t i = 0; i < identities.size(); ++i) {
    if (seen.insert(identities[i]).second) {
      q_rows.push_back(static_cast<Eigen::Index>(i));
      q_ids.push_back(identities[i]);
    } else {
      g_rows.push_back(static_cast<Eigen::Index>(i));
      g_ids.push_back(identities[i]);
    }
  }
  return compute_map_cmc(embeddings(q_rows, Eigen::all), embeddings(g_rows, Eigen::all),
                         q_ids, g_ids, max_rank);
}

ClusteringQuality clustering_quality(std::span<const int> predicted, std::span<const std::uint32_t> truth) {
  require(predicted.size() == truth.size(), "prediction and truth sizes differ");
  const std::size_t n = predicted.size();
  // Outliers become unique negative ids so they are singletons.
  std::map<std::int64_t, double> pred_sizes;
  std::map<std::uint32_t, double> true_sizes;
  std::map<std::pair<std::int64_t, std::uint32_t>, double> joint;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t p = predicted[i] >= 0 ? predicted[i] : -1 - static_cast<std::int64_t>(i);
    pred_sizes[p] += 1.0;
    true_sizes[truth[i]] += 1.0;
    joint[{p, truth[i]}] += 1.0;
  }
  double same_both = 0.0, same_pred = 0.0, same_true = 0.0;
  for (const auto& [key, c] : joint) same_both += choose2(c);
  for (const auto& [key, c] : pred_sizes) same_pred += choose2(c);
  for (const auto& [key, c] : true_sizes) same_true += choose2(c);

  ClusteringQuality q;
  q.precision = same_pred > 0.0 ? same_both / same_pred : 1.0;
  q.recall = same_true > 0.0 ? same_both / same_true : 1.0;
  q.f = q.precision + q.recall > 0.0 ? 2.0 * q.precision * q.recall / (q.precision + q.recall) : 0.0;
  const double total = choose2(static_cast<double>(n));
  const double expected = total > 0.0 ? same_pred * same_true / total : 0.0;
  const double max_index = 0.5 * (same_pred + same_true);
  if (max_index - expected == 0.0)
    q.ari = same_both == expected ? 1.0 : 0.0;
  else
    q.ari = (same_both - expected) / (max_index - expected);
  return q;
}

double pair_precision(std::span<const std::int64_t> labels, std::span<const std::uint32_t> truth) {
  require(labels.size() == truth.size(), "label and truth sizes differ");
  std::map<std::int64_t, double> sizes;
  std::map<std::pair<std::int64_t, std::uint32_t>, double> joint;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    sizes[labels[i]] += 1.0;
    joint[{labels[i], truth[i]}] += 1.0;
  }
  double pairs = 0.0, correct = 0.0;
  for (const auto& [k, c] : sizes) pairs += choose2(c);
  for (const auto& [k, c] : joint) correct += choose2(c);
  return pairs > 0.0 ? correct / pairs : 1.0;
}

std::vector<double> labeling_histogram(std::span<const LabelingRecord> epochs) {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(pair_precision(e.labels, e.truth));
  return out;
}

CostProfile clustering_cost_model(std::size_t n_points) {
  CostProfile c;
  c.n_points = n_points;
  c.distance_entries = 2 * std::uint64_t{n_points} * n_points;
  c.peak_bytes = c.distance_entries * 8;
  return c;
}

CostProfile profile_clustering(const Matrix& embeddings, const ClusteringParams& params, std::size_t repeats) {
  require(repeats >= 1, "repeats must be >= 1");
  const std::size_t n = static_cast<std::size_t>(embeddings.rows());
  CostProfile c = clustering_cost_model(n);
  for (std::size_t r = 0; r < repeats; ++r) {
    const ClusteringPass pass = cluster_embeddings(embeddings, params);
    if (pass.entries != c.distance_entries)
      fail(ErrorCode::kState, "entry counter disagrees with the analytic model: " + std::to_string(pass.entries) +
                                  " vs " + std::to_string(c.distance_entries));
    c.run_seconds.push_back(pass.seconds);
  }
  std::vector<double> sorted = c.run_seconds;
  std::sort(sorted.begin(), sorted.end());
  c.wall_seconds = sorted[sorted.size() / 2];
  return c;
}

}  // namespace mcl
