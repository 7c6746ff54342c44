#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "core/error.hpp"

namespace mcl {
namespace {

std::mt19937_64 training_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7a11u};
  return std::mt19937_64(seq);
}

Matrix gather_augmented(const Pool& pool, std::span<const std::size_t> rows, const TrainConfig& config,
                        std::mt19937_64& rng) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pool.d_raw));
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = augment(pool.row(rows[i]), rng, config.aug_sigma, config.aug_drop).transpose();
  return x;
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, std::string("non-finite ") + what + " loss");
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

const char* to_string(Regime r) {
  switch (r) {
    case Regime::kMcl:
      return "mcl";
    case Regime::kAll:
      return "all";
    case Regime::kNaive:
      return "naive";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "mcl") return Regime::kMcl;
  if (s == "all") return Regime::kAll;
  if (s == "naive") return Regime::kNaive;
  fail(ErrorCode::kInvalidArgument, "unknown regime '" + s + "' (expected mcl, all or naive)");
}

void TrainConfig::validate() const {
  require(splits >= 1, "splits (N) must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(warmup_epochs < epochs, "warmup_epochs must be smaller than epochs");
  require(P >= 1 && I >= 1 && P2 >= 1 && I2 >= 1, "batch sizes P, I, P2, I2 must be >= 1");
  require(momentum >= 0.0 && momentum <= 1.0, "momentum must be in [0, 1]");
  require(margin >= 0.0, "margin must be >= 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(tau > 0.0, "tau must be > 0");
  require(clustering.eps >= 0.0, "eps must be >= 0");
  require(clustering.min_pts >= 1, "min_pts must be >= 1");
  require(clustering.k >= 1, "k must be >= 1");
  require(adam.lr >= 0.0, "lr must be >= 0");
  require(d_emb >= 1, "d_emb must be >= 1");
  require(aug_sigma >= 0.0, "aug_sigma must be >= 0");
  require(aug_drop >= 0.0 && aug_drop < 1.0, "aug_drop must be in [0, 1)");
  require(threads >= 1, "threads must be >= 1");
  if (regime == Regime::kNaive) require(epochs >= splits, "naive regime needs at least one epoch per subset");
}

std::vector<std::size_t> EpochPlan::subset(std::size_t j) const {
  require(j < N(), "subset index out of range");
  std::vector<std::size_t> rows(permutation.begin() + static_cast<std::ptrdiff_t>(boundaries[j]),
                                permutation.begin() + static_cast<std::ptrdiff_t>(boundaries[j + 1]));
  std::sort(rows.begin(), rows.end());
  return rows;
}

EpochPlan epoch_split(std::size_t pool_size, std::size_t N, std::size_t epoch, std::uint64_t seed) {
  require(N >= 1, "split count must be >= 1");
  if (N > pool_size)
    fail(ErrorCode::kInvalidArgument,
         "cannot split " + std::to_string(pool_size) + " samples into " + std::to_string(N) + " subsets");
  EpochPlan plan;
  plan.epoch = epoch;
  plan.seed = seed + epoch;
  plan.permutation.resize(pool_size);
  std::iota(plan.permutation.begin(), plan.permutation.end(), std::size_t{0});
  std::mt19937_64 rng(plan.seed);
  std::shuffle(plan.permutation.begin(), plan.permutation.end(), rng);
  plan.boundaries.resize(N + 1, 0);
  const std::size_t base = pool_size / N;
  const std::size_t extra = pool_size % N;
  for (std::size_t j = 0; j < N; ++j) plan.boundaries[j + 1] = plan.boundaries[j] + base + (j < extra ? 1 : 0);
  return plan;
}

std::vector<std::size_t> pk_sample(std::span<const std::int64_t> labels, std::size_t P, std::size_t I,
                                   std::mt19937_64& rng) {
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < P)
    fail(ErrorCode::kInvalidArgument, "PK sampling needs " + std::to_string(P) + " labels, only " +
                                          std::to_string(members.size()) + " available");
  std::vector<const std::vector<std::size_t>*> groups;
  groups.reserve(members.size());
  for (const auto& [label, rows] : members) groups.push_back(&rows);

  std::vector<std::size_t> out;
  out.reserve(P * I);
  for (std::size_t p = 0; p < P; ++p) {
    std::uniform_int_distribution<std::size_t> pick(p, groups.size() - 1);
    std::swap(groups[p], groups[pick(rng)]);
    std::vector<std::size_t> rows = *groups[p];
    if (rows.size() >= I) {
      for (std::size_t i = 0; i < I; ++i) {
        std::uniform_int_distribution<std::size_t> take(i, rows.size() - 1);
        std::swap(rows[i], rows[take(rng)]);
        out.push_back(rows[i]);
      }
    } else {
      out.insert(out.end(), rows.begin(), rows.end());
      std::uniform_int_distribution<std::size_t> take(0, rows.size() - 1);
      for (std::size_t i = rows.size(); i < I; ++i) out.push_back(rows[take(rng)]);
    }
  }
  return out;
}

TrainState TrainState::initial(std::size_t d_raw, const TrainConfig& config) {
  TrainState s;
  s.params = EncoderParams::identity_init(d_raw, config.d_hidden, config.d_emb, config.seed, config.init_jitter);
  s.optimizer = OptimizerState::for_params(s.params, config.adam);
  s.rng = training_rng(config.seed);
  return s;
}

Matrix embed_rows(const EncoderParams& params, const Pool& pool, std::span<const std::size_t> rows) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pool.d_raw));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = pool.row(rows[i]);
    for (std::size_t j = 0; j < pool.d_raw; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src[j];
  }
  return encode_batch(params, std::move(x)).out;
}

Phase1Result run_phase1_epoch(const Pool& pool, std::span<const std::size_t> rows, TrainState& state,
                              const TrainConfig& config, double lr) {
  require(rows.size() >= config.clustering.min_pts + 1, "meta-training subset is smaller than min_pts + 1");
  const Matrix features = embed_rows(state.params, pool, rows);
  ClusteringPass pass = cluster_embeddings(features, config.clustering);

  Phase1Result result{init_from_clusters(features, pass.assignment, config.momentum, config.proto_renorm), {}};
  Phase1Stats& stats = result.stats;
  stats.rows.assign(rows.begin(), rows.end());
  stats.entries = pass.entries;
  stats.cluster_seconds = pass.seconds;

  // Outliers are discarded for this epoch.
  std::vector<std::size_t> clustered;
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (pass.assignment.labels[i] == ClusterAssignment::kOutlier) continue;
    clustered.push_back(rows[i]);
    labels.push_back(pass.assignment.labels[i]);
  }
  stats.assignment = std::move(pass.assignment);

  const std::size_t P = std::min(config.P, result.bank.K());
  const std::size_t batches = ceil_div(clustered.size(), config.P * config.I);
  std::vector<std::size_t> batch_rows;
  std::vector<int> batch_labels;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto picks = pk_sample(labels, P, config.I, state.rng);
    batch_rows.clear();
    batch_labels.clear();
    for (std::size_t pos : picks) {
      batch_rows.push_back(clustered[pos]);
      batch_labels.push_back(static_cast<int>(labels[pos]));
    }
    EncodeCache cache = encode_batch(state.params, gather_augmented(pool, batch_rows, config, state.rng));
    const LossValue loss = infonce_batch(cache.out, result.bank, batch_labels, config.tau);
    check_finite(loss.value, "phase-1");
    const EncoderParams grads = encode_backward(state.params, cache, loss.grad);
    adam_step(state.params, grads, state.optimizer, lr);
    momentum_update(result.bank, cache.out, batch_labels);
    stats.loss_trace.push_back(loss.value);
  }
  return result;
}

Phase2Stats run_phase2_epoch(const Pool& pool, const std::vector<std::vector<std::size_t>>& subsets,
                             const PrototypeBank& bank, TrainState& state, const TrainConfig& config, double lr) {
  require(bank.K() >= 1, "phase 2 needs a non-empty prototype bank");
  Phase2Stats stats;
  for (std::size_t j = 0; j < subsets.size(); ++j) {
    for (std::size_t row : subsets[j]) {
      stats.rows.push_back(row);
      stats.identities.push_back({j + 2, 0});
    }
  }
  if (stats.rows.empty()) return stats;

  const Matrix features = embed_rows(state.params, pool, stats.rows);
  std::vector<std::int64_t> keys(stats.rows.size());
  for (std::size_t i = 0; i < stats.rows.size(); ++i) {
    stats.identities[i].proto_index = harden(soft_label(features.row(static_cast<Eigen::Index>(i)).transpose(), bank));
    keys[i] = stats.identities[i].key(bank.K(), config.shared_label_space);
  }
  std::vector<std::int64_t> distinct = keys;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  // Triplets need a negative; with one identity only the consistency term runs.
  stats.triplet_skipped = bank.K() < 2 || distinct.size() < 2;
  if (stats.triplet_skipped && !config.use_sc) return stats;

  const std::size_t P = std::min(config.P2, distinct.size());
  const std::size_t batches = ceil_div(stats.rows.size(), config.P2 * config.I2);
  std::vector<std::size_t> view_rows;
  std::vector<std::int64_t> view_ids;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto picks = pk_sample(keys, P, config.I2, state.rng);
    const std::size_t m = picks.size();
    view_rows.assign(2 * m, 0);
    view_ids.assign(2 * m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      view_rows[i] = view_rows[m + i] = stats.rows[picks[i]];
      view_ids[i] = view_ids[m + i] = keys[picks[i]];
    }
    EncodeCache cache = encode_batch(state.params, gather_augmented(pool, view_rows, config, state.rng));

    LossValue sc;
    if (config.use_sc) sc = siamese_batch(cache.out, bank);
    LossValue tri;
    if (!stats.triplet_skipped) tri = batch_hard_triplet(cache.out, view_ids, config.margin, config.triplet_weight);
    const LossValue total = phase2_total(sc, tri, config.lambda);
    check_finite(total.value, "phase-2");
    const EncoderParams grads = encode_backward(state.params, cache, total.grad);
    adam_step(state.params, grads, state.optimizer, lr);
    stats.loss_trace.push_back(total.value);
    stats.sc_trace.push_back(sc.value);
    stats.tri_trace.push_back(tri.value);
  }
  return stats;
}

TrainResult train(const Pool& pool, const TrainConfig& config, const EpochObserver& observer) {
  config.validate();
  const std::size_t n = pool.size();
  const std::size_t N = config.regime == Regime::kAll ? 1 : config.splits;
  if (N > n) fail(ErrorCode::kInvalidArgument, "split count exceeds pool size");
  const std::size_t smallest = n / N;
  if (config.P * config.I > smallest)
    fail(ErrorCode::kInvalidArgument, "P*I = " + std::to_string(config.P * config.I) +
                                          " exceeds the meta-training subset size " + std::to_string(smallest) +
                                          "; lower P/I or the split count");

  TrainState state = TrainState::initial(pool.d_raw, config);
  TrainResult result;

  const EpochPlan fixed_plan = epoch_split(n, N, 0, config.seed);
  // NaiveSplit: stage j covers epochs [stage_start[j], stage_start[j + 1]).
  std::vector<std::size_t> stage_start(N + 1, 0);
  for (std::size_t j = 0; j < N; ++j)
    stage_start[j + 1] = stage_start[j] + config.epochs / N + (j < config.epochs % N ? 1 : 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = scheduled_lr(config.adam.lr, epoch, config.epochs, config.lr_decay_epochs);
    const bool reuse_plan = config.regime == Regime::kNaive || config.fixed_split;
    const EpochPlan plan = reuse_plan ? fixed_plan : epoch_split(n, N, epoch, config.seed);

    std::size_t stage = 0;
    if (config.regime == Regime::kNaive)
      while (epoch >= stage_start[stage + 1]) ++stage;

    EpochSnapshot snap;
    snap.epoch = epoch;
    snap.stage = stage;
    snap.lr = lr;
    snap.plan = &plan;

    std::optional<Phase1Result> phase1;
    try {
      phase1 = run_phase1_epoch(pool, plan.subset(stage), state, config, lr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoClusters) throw;
      snap.aborted = true;
      snap.abort_reason = e.what();
      ++result.aborted_epochs;
    }

    std::optional<Phase2Stats> phase2;
    const bool polish = config.regime == Regime::kMcl && N > 1 && epoch >= config.warmup_epochs;
    if (phase1 && polish) {
      std::vector<std::vector<std::size_t>> rest;
      for (std::size_t j = 1; j < N; ++j) rest.push_back(plan.subset(j));
      phase2 = run_phase2_epoch(pool, rest, phase1->bank, state, config, lr);
    }

    if (phase1) {
      result.bank = phase1->bank;
      snap.phase1 = &phase1->stats;
      snap.bank = &phase1->bank;
    }
    if (phase2) snap.phase2 = &*phase2;
    snap.params = &state.params;
    if (observer) observer(snap);
  }
  result.params = std::move(state.params);
  return result;
}

}  // namespace mcl
