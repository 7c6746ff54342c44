#include "core/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace mcl {
namespace {

using nlohmann::json;

const char* weight_name(TripletWeight w) {
  switch (w) {
    case TripletWeight::kClamped:
      return "clamped";
    case TripletWeight::kUnclamped:
      return "unclamped";
    case TripletWeight::kPlain:
      return "plain";
  }
  return "?";
}

TripletWeight weight_from_name(const std::string& s) {
  if (s == "clamped") return TripletWeight::kClamped;
  if (s == "unclamped") return TripletWeight::kUnclamped;
  if (s == "plain") return TripletWeight::kPlain;
  fail(ErrorCode::kInvalidArgument, "unknown triplet_weight '" + s + "' (expected clamped, unclamped or plain)");
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("config key '") + key + "': " + e.what());
  }
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t holdout_count(const Pool& pool, double fraction) {
  if (fraction <= 0.0) return 0;
  if (pool.num_identities < 3) fail(ErrorCode::kInvalidArgument, "holdout needs at least three identities");
  const auto h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.num_identities)));
  return std::clamp<std::size_t>(h, 2, pool.num_identities - 1);
}

}  // namespace

std::size_t splits_from_ratio(double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, "split ratio must be in (0, 1]");
  return static_cast<std::size_t>(std::llround(1.0 / ratio));
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig base) {
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "config must be a JSON object");
  static const std::vector<std::string> known = {
      "regime", "splits", "split_ratio", "epochs", "warmup_epochs", "P", "I", "P2", "I2", "momentum", "margin",
      "lambda", "tau", "k", "eps", "min_pts", "include_self", "lr", "beta1", "beta2", "adam_eps", "weight_decay",
      "lr_decay_epochs", "d_hidden", "d_emb", "init_jitter", "aug_sigma", "aug_drop", "seed", "fixed_split",
      "shared_label_space", "use_sc", "triplet_weight", "proto_renorm", "threads", "holdout_fraction",
      "eval_every_epoch"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");

  ExperimentConfig c = std::move(base);
  TrainConfig& t = c.train;
  if (j.contains("regime")) t.regime = regime_from_string(j.at("regime").get<std::string>());
  read_into(j, "splits", t.splits);
  if (j.contains("split_ratio")) {
    double r = 0.0;
    read_into(j, "split_ratio", r);
    t.splits = splits_from_ratio(r);
  }
  read_into(j, "epochs", t.epochs);
  read_into(j, "warmup_epochs", t.warmup_epochs);
  read_into(j, "P", t.P);
  read_into(j, "I", t.I);
  read_into(j, "P2", t.P2);
  read_into(j, "I2", t.I2);
  read_into(j, "momentum", t.momentum);
  read_into(j, "margin", t.margin);
  read_into(j, "lambda", t.lambda);
  read_into(j, "tau", t.tau);
  read_into(j, "k", t.clustering.k);
  read_into(j, "eps", t.clustering.eps);
  read_into(j, "min_pts", t.clustering.min_pts);
  read_into(j, "include_self", t.clustering.include_self);
  read_into(j, "lr", t.adam.lr);
  read_into(j, "beta1", t.adam.beta1);
  read_into(j, "beta2", t.adam.beta2);
  read_into(j, "adam_eps", t.adam.epsilon);
  read_into(j, "weight_decay", t.adam.weight_decay);
  read_into(j, "lr_decay_epochs", t.lr_decay_epochs);
  read_into(j, "d_hidden", t.d_hidden);
  read_into(j, "d_emb", t.d_emb);
  read_into(j, "init_jitter", t.init_jitter);
  read_into(j, "aug_sigma", t.aug_sigma);
  read_into(j, "aug_drop", t.aug_drop);
  read_into(j, "seed", t.seed);
  read_into(j, "fixed_split", t.fixed_split);
  read_into(j, "shared_label_space", t.shared_label_space);
  read_into(j, "use_sc", t.use_sc);
  if (j.contains("triplet_weight")) t.triplet_weight = weight_from_name(j.at("triplet_weight").get<std::string>());
  read_into(j, "proto_renorm", t.proto_renorm);
  read_into(j, "threads", t.threads);
  t.clustering.threads = t.threads;
  read_into(j, "holdout_fraction", c.holdout_fraction);
  read_into(j, "eval_every_epoch", c.eval_every_epoch);
  require(c.holdout_fraction >= 0.0 && c.holdout_fraction < 1.0, "holdout_fraction must be in [0, 1)");
  t.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  return json{{"regime", to_string(t.regime)},
              {"splits", t.splits},
              {"epochs", t.epochs},
              {"warmup_epochs", t.warmup_epochs},
              {"P", t.P},
              {"I", t.I},
              {"P2", t.P2},
              {"I2", t.I2},
              {"momentum", t.momentum},
              {"margin", t.margin},
              {"lambda", t.lambda},
              {"tau", t.tau},
              {"k", t.clustering.k},
              {"eps", t.clustering.eps},
              {"min_pts", t.clustering.min_pts},
              {"include_self", t.clustering.include_self},
              {"lr", t.adam.lr},
              {"beta1", t.adam.beta1},
              {"beta2", t.adam.beta2},
              {"adam_eps", t.adam.epsilon},
              {"weight_decay", t.adam.weight_decay},
              {"lr_decay_epochs", t.lr_decay_epochs},
              {"d_hidden", t.d_hidden},
              {"d_emb", t.d_emb},
              {"init_jitter", t.init_jitter},
              {"aug_sigma", t.aug_sigma},
              {"aug_drop", t.aug_drop},
              {"seed", t.seed},
              {"fixed_split", t.fixed_split},
              {"shared_label_space", t.shared_label_space},
              {"use_sc", t.use_sc},
              {"triplet_weight", weight_name(t.triplet_weight)},
              {"proto_renorm", t.proto_renorm},
              {"threads", t.threads},
              {"holdout_fraction", c.holdout_fraction},
              {"eval_every_epoch", c.eval_every_epoch}};
}

std::pair<Pool, Pool> experiment_split(const Pool& pool, double holdout_fraction) {
  const std::size_t h = holdout_count(pool, holdout_fraction);
  if (h == 0) return {pool, Pool{}};
  return split_holdout(pool, h);
}

RetrievalMetrics evaluate_params(const EncoderParams& params, const Pool& pool, double holdout_fraction) {
  require(pool.has_labels(), "evaluation needs ground-truth labels");
  const Pool eval = holdout_fraction >= 1.0 ? pool : experiment_split(pool, holdout_fraction).second;
  require(eval.size() > 0, "no held-out identities to evaluate on");
  std::vector<std::size_t> rows(eval.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return evaluate_retrieval(embed_rows(params, eval, rows), eval.identities);
}

RunResult run_experiment(const Pool& pool, const ExperimentConfig& config) {
  require(pool.has_labels(), "experiments need ground-truth labels for evaluation");
  auto [train_pool, eval_pool] = experiment_split(pool, config.holdout_fraction);

  RunResult result;
  RunReport& report = result.report;
  report.config = config;
  report.train_samples = train_pool.size();
  report.eval_samples = eval_pool.size();
  std::vector<std::size_t> eval_rows(eval_pool.size());
  std::iota(eval_rows.begin(), eval_rows.end(), std::size_t{0});
  {
    std::vector<std::uint32_t> ids = eval_pool.identities;
    std::sort(ids.begin(), ids.end());
    report.eval_identities = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
  }

  auto retrieval = [&](const EncoderParams& params) {
    return evaluate_retrieval(embed_rows(params, eval_pool, eval_rows), eval_pool.identities);
  };

  // Ground truth is read here, outside the trainer.
  EpochObserver observer = [&](const EpochSnapshot& s) {
    EpochRecord r;
    r.epoch = s.epoch;
    r.stage = s.stage;
    r.lr = s.lr;
    r.aborted = s.aborted;
    if (s.phase1) {
      const Phase1Stats& p1 = *s.phase1;
      r.phase1_size = p1.rows.size();
      r.clusters = p1.assignment.K;
      r.outliers = p1.assignment.outliers();
      r.entries = p1.entries;
      r.cluster_seconds = p1.cluster_seconds;
      if (!p1.loss_trace.empty()) {
        r.phase1_loss_first = p1.loss_trace.front();
        r.phase1_loss_last = p1.loss_trace.back();
        r.phase1_loss_mean = mean(p1.loss_trace);
      }
      std::vector<std::uint32_t> truth;
      std::vector<std::int64_t> labels;
      for (std::size_t i = 0; i < p1.rows.size(); ++i) {
        truth.push_back(train_pool.identities[p1.rows[i]]);
        labels.push_back(p1.assignment.labels[i]);
      }
      r.label_precision = pair_precision(labels, truth);
      r.cluster_quality = clustering_quality(p1.assignment.labels, truth);
    }
    if (s.phase2) {
      const Phase2Stats& p2 = *s.phase2;
      r.phase2_size = p2.rows.size();
      r.phase2_loss_mean = mean(p2.loss_trace);
      r.sc_mean = mean(p2.sc_trace);
      r.tri_mean = mean(p2.tri_trace);
      std::vector<std::uint32_t> truth;
      std::vector<std::int64_t> labels;
      const std::size_t K = s.bank ? s.bank->K() : 1;
      for (std::size_t i = 0; i < p2.rows.size(); ++i) {
        truth.push_back(train_pool.identities[p2.rows[i]]);
        labels.push_back(p2.identities[i].key(K, config.train.shared_label_space));
      }
      r.phase2_label_precision = pair_precision(labels, truth);
    }
    const bool last = s.epoch + 1 == config.train.epochs;
    if (eval_pool.size() > 0 && (config.eval_every_epoch || last)) {
      const RetrievalMetrics m = retrieval(*s.params);
      r.mAP = m.mAP;
      r.rank1 = m.rank(1);
      r.rank5 = m.rank(5);
      r.rank10 = m.rank(10);
      if (last) report.final_metrics = m;
    }
    report.total_entries += r.entries;
    report.peak_bytes = std::max<std::uint64_t>(report.peak_bytes, r.entries * 8);
    report.cluster_seconds += r.cluster_seconds;
    report.epochs.push_back(r);
  };

  result.train = train(train_pool, config.train, observer);
  report.aborted_epochs = result.train.aborted_epochs;
  return result;
}

json report_to_json(const RunReport& report) {
  json epochs = json::array();
  for (const auto& r : report.epochs) {
    epochs.push_back({{"epoch", r.epoch + 1},
                      {"stage", r.stage},
                      {"lr", r.lr},
                      {"aborted", r.aborted},
                      {"phase1_size", r.phase1_size},
                      {"phase2_size", r.phase2_size},
                      {"clusters", r.clusters},
                      {"outliers", r.outliers},
                      {"entries", r.entries},
                      {"peak_bytes", r.entries * 8},
                      {"cluster_seconds", r.cluster_seconds},
                      {"phase1_loss_first", r.phase1_loss_first},
                      {"phase1_loss_last", r.phase1_loss_last},
                      {"phase1_loss_mean", r.phase1_loss_mean},
                      {"phase2_loss_mean", r.phase2_loss_mean},
                      {"sc_mean", r.sc_mean},
                      {"tri_mean", r.tri_mean},
                      {"label_precision", r.label_precision},
                      {"phase2_label_precision", r.phase2_label_precision},
                      {"pairwise_precision", r.cluster_quality.precision},
                      {"pairwise_recall", r.cluster_quality.recall},
                      {"pairwise_f", r.cluster_quality.f},
                      {"ari", r.cluster_quality.ari},
                      {"mAP", r.mAP},
                      {"rank1", r.rank1},
                      {"rank5", r.rank5},
                      {"rank10", r.rank10}});
  }
  json series = json::array();
  for (const auto& r : report.epochs) series.push_back(r.label_precision);
  return json{{"config", config_to_json(report.config)},
              {"train_samples", report.train_samples},
              {"eval_samples", report.eval_samples},
              {"eval_identities", report.eval_identities},
              {"final",
               {{"mAP", report.final_metrics.mAP},
                {"rank1", report.final_metrics.rank(1)},
                {"cmc", report.final_metrics.cmc}}},
              {"totals",
               {{"entries", report.total_entries},
                {"peak_bytes", report.peak_bytes},
                {"cluster_seconds", report.cluster_seconds},
                {"aborted_epochs", report.aborted_epochs}}},
              {"label_correct_fraction", series},
              {"epochs", epochs}};
}

std::string metrics_csv(const RunReport& report) {
  std::ostringstream out;
  out << std::setprecision(10) << "epoch,mAP,rank1,entries,seconds\n";
  for (const auto& r : report.epochs)
    out << r.epoch + 1 << ',' << r.mAP << ',' << r.rank1 << ',' << r.entries << ',' << r.cluster_seconds << '\n';
  return out.str();
}

std::string cost_csv(const RunReport& report) {
  std::ostringstream out;
  out << std::setprecision(10) << "epoch,stage,n_clustered,entries,peak_bytes,seconds,clusters,outliers,label_precision\n";
  for (const auto& r : report.epochs)
    out << r.epoch + 1 << ',' << r.stage << ',' << r.phase1_size << ',' << r.entries << ',' << r.entries * 8 << ','
        << r.cluster_seconds << ',' << r.clusters << ',' << r.outliers << ',' << r.label_precision << '\n';
  return out.str();
}

CompareResult compare_regimes(const Pool& pool, const ExperimentConfig& config, const std::vector<double>& ratios) {
  CompareResult out;
  auto run = [&](Regime regime, double ratio) {
    ExperimentConfig c = config;
    c.train.regime = regime;
    c.train.splits = regime == Regime::kAll ? 1 : splits_from_ratio(ratio);
    RunResult r = run_experiment(pool, c);
    CompareRow row;
    row.scheme = to_string(regime);
    row.ratio = regime == Regime::kAll ? 1.0 : ratio;
    row.splits = c.train.splits;
    row.mAP = r.report.final_metrics.mAP;
    row.rank1 = r.report.final_metrics.rank(1);
    std::size_t passes = 0;
    for (const auto& e : r.report.epochs) {
      row.entries = std::max<std::uint64_t>(row.entries, e.entries);
      passes += e.aborted ? 0 : 1;
    }
    row.peak_bytes = row.entries * 8;
    row.seconds = passes ? r.report.cluster_seconds / static_cast<double>(passes) : 0.0;
    out.rows.push_back(row);
    out.reports.push_back(std::move(r.report));
  };
  run(Regime::kAll, 1.0);
  for (double ratio : ratios) {
    if (splits_from_ratio(ratio) <= 1) continue;
    run(Regime::kMcl, ratio);
    run(Regime::kNaive, ratio);
  }
  return out;
}

std::string compare_csv(const CompareResult& result) {
  std::ostringstream out;
  out << std::setprecision(10) << "scheme,ratio,splits,mAP,rank1,entries,peak_bytes,seconds\n";
  for (const auto& r : result.rows)
    out << r.scheme << ',' << r.ratio << ',' << r.splits << ',' << r.mAP << ',' << r.rank1 << ',' << r.entries << ','
        << r.peak_bytes << ',' << r.seconds << '\n';
  return out.str();
}

std::string budget_csv(const CompareResult& result) {
  double all_map = 0.0;
  std::uint64_t all_bytes = 0;
  for (const auto& r : result.rows)
    if (r.scheme == "all") all_map = r.mAP, all_bytes = r.peak_bytes;
  std::ostringstream out;
  out << std::setprecision(10) << "budget_fraction,peak_bytes,mcl_mAP,naive_mAP,all_mAP\n";
  out << 1.0 << ',' << all_bytes << ',' << all_map << ',' << all_map << ',' << all_map << '\n';
  for (const auto& r : result.rows) {
    if (r.scheme != "mcl") continue;
    double naive = 0.0;
    for (const auto& q : result.rows)
      if (q.scheme == "naive" && q.splits == r.splits) naive = q.mAP;
    const double frac = all_bytes ? static_cast<double>(r.peak_bytes) / static_cast<double>(all_bytes) : 0.0;
    out << frac << ',' << r.peak_bytes << ',' << r.mAP << ',' << naive << ',' << all_map << '\n';
  }
  return out.str();
}

std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) fail(ErrorCode::kState, "cannot allocate digest context");
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

}  // namespace mcl
