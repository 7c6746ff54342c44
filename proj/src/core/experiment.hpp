#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/data.hpp"
#include "core/metrics.hpp"
#include "core/trainer.hpp"

namespace mcl {

struct ExperimentConfig {
  TrainConfig train;
  double holdout_fraction = 0.2;  // identities reserved for evaluation
  bool eval_every_epoch = true;
};

// Overrides the defaults with the keys present in `j`; unknown keys are
// rejected. "split_ratio" r sets splits = round(1 / r).
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& config);

std::size_t splits_from_ratio(double ratio);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t stage = 0;
  double lr = 0.0;
  bool aborted = false;
  std::size_t phase1_size = 0;
  std::size_t phase2_size = 0;
  std::size_t clusters = 0;
  std::size_t outliers = 0;
  std::uint64_t entries = 0;
  double cluster_seconds = 0.0;
  double phase1_loss_first = 0.0;
  double phase1_loss_last = 0.0;
  double phase1_loss_mean = 0.0;
  double phase2_loss_mean = 0.0;
  double sc_mean = 0.0;
  double tri_mean = 0.0;
  double label_precision = 0.0;         // phase-1 pseudo labels, correct-pair fraction
  double phase2_label_precision = 0.0;  // hardened phase-2 identities
  ClusteringQuality cluster_quality;
  double mAP = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
};

struct RunReport {
  ExperimentConfig config;
  std::size_t train_samples = 0;
  std::size_t eval_samples = 0;
  std::size_t eval_identities = 0;
  std::vector<EpochRecord> epochs;
  RetrievalMetrics final_metrics;
  std::uint64_t total_entries = 0;
  std::uint64_t peak_bytes = 0;  // largest single clustering pass, entries * 8
  double cluster_seconds = 0.0;
  std::size_t aborted_epochs = 0;
};

struct RunResult {
  TrainResult train;
  RunReport report;
};

// Splits off held-out identities, trains on the rest and evaluates retrieval
// on the held-out part after every epoch.
RunResult run_experiment(const Pool& pool, const ExperimentConfig& config);

// Splits a pool the same way run_experiment does; returns {train, eval}.
std::pair<Pool, Pool> experiment_split(const Pool& pool, double holdout_fraction);

// Retrieval on the held-out identities of `pool` (or on all of it when
// holdout_fraction >= 1).
RetrievalMetrics evaluate_params(const EncoderParams& params, const Pool& pool, double holdout_fraction);

nlohmann::json report_to_json(const RunReport& report);
// epoch,mAP,rank1,entries,seconds
std::string metrics_csv(const RunReport& report);
// epoch,stage,n_clustered,entries,peak_bytes,seconds,clusters,outliers,label_precision
std::string cost_csv(const RunReport& report);

struct CompareRow {
  std::string scheme;
  double ratio = 1.0;
  std::size_t splits = 1;
  double mAP = 0.0;
  double rank1 = 0.0;
  std::uint64_t entries = 0;  // per clustering pass
  std::uint64_t peak_bytes = 0;
  double seconds = 0.0;  // mean clustering wall time per pass
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<RunReport> reports;  // parallel to rows
};

// "all" once, then mcl and naive for every ratio below 1.
CompareResult compare_regimes(const Pool& pool, const ExperimentConfig& config, const std::vector<double>& ratios);

// scheme,ratio,splits,mAP,rank1,entries,peak_bytes,seconds
std::string compare_csv(const CompareResult& result);
// budget_fraction,peak_bytes,mcl_mAP,naive_mAP,all_mAP
std::string budget_csv(const CompareResult& result);

// SHA-1 over "blob <size>\0" + bytes, as git hashes file contents.
std::string git_blob_sha1(const std::string& bytes);

}  // namespace mcl
