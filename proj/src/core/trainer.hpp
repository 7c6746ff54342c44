#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/cluster.hpp"
#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/protobank.hpp"

namespace mcl {

enum class Regime { kMcl, kAll, kNaive };

const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
  Regime regime = Regime::kMcl;
  std::size_t splits = 2;  // N; the meta-training subset is 1/N of the pool
  std::size_t epochs = 60;
  std::size_t warmup_epochs = 10;

  // Phase-1 PK batches (P pseudo identities x I instances).
  std::size_t P = 16;
  std::size_t I = 16;
  // Phase-2 PK batches over hardened identities.
  std::size_t P2 = 16;
  std::size_t I2 = 4;

  double momentum = 0.2;
  double margin = 0.3;
  double lambda = 1.0;
  double tau = 0.05;

  ClusteringParams clustering;  // k = 30, eps = 0.7, min_pts = 4

  AdamOptions adam;
  std::vector<std::size_t> lr_decay_epochs;  // empty: every third of the run

  std::size_t d_hidden = 128;
  std::size_t d_emb = 64;
  double init_jitter = 0.01;

  double aug_sigma = 0.1;
  double aug_drop = 0.1;

  std::uint64_t seed = 1;

  // Ablations.
  bool fixed_split = false;         // one plan for every epoch
  bool shared_label_space = false;  // phase-2 identity ignores the subset
  bool use_sc = true;
  TripletWeight triplet_weight = TripletWeight::kClamped;
  bool proto_renorm = true;

  std::size_t threads = 1;

  // Throws Error(kInvalidArgument) with an actionable message.
  void validate() const;
};

// Per-epoch uniform split of the pool into N near-equal subsets.
struct EpochPlan {
  std::vector<std::size_t> permutation;
  std::vector<std::size_t> boundaries;  // N + 1 offsets into permutation
  std::size_t epoch = 0;
  std::uint64_t seed = 0;

  std::size_t N() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
  // Rows of subset j (0-based, j = 0 is the meta-training subset), ascending.
  std::vector<std::size_t> subset(std::size_t j) const;

  bool operator==(const EpochPlan&) const = default;
};

EpochPlan epoch_split(std::size_t pool_size, std::size_t N, std::size_t epoch, std::uint64_t seed);

// P distinct labels uniformly without replacement, then I positions per label:
// without replacement when the label has >= I members, otherwise every member
// once plus uniform draws with replacement. Returns positions into `labels`.
std::vector<std::size_t> pk_sample(std::span<const std::int64_t> labels, std::size_t P, std::size_t I,
                                   std::mt19937_64& rng);

// Phase-2 identity: equal only when both the subset and the prototype agree.
struct Phase2Identity {
  std::size_t subset_index = 0;  // 2..N
  std::size_t proto_index = 0;

  std::int64_t key(std::size_t K, bool shared_label_space) const {
    return shared_label_space ? static_cast<std::int64_t>(proto_index)
                              : static_cast<std::int64_t>(subset_index * K + proto_index);
  }
  bool operator==(const Phase2Identity&) const = default;
};

struct Phase1Stats {
  std::vector<std::size_t> rows;  // pool rows clustered this epoch
  ClusterAssignment assignment;   // parallel to rows
  std::uint64_t entries = 0;
  double cluster_seconds = 0.0;
  std::vector<double> loss_trace;
};

struct Phase1Result {
  PrototypeBank bank;
  Phase1Stats stats;
};

struct Phase2Stats {
  std::vector<std::size_t> rows;
  std::vector<Phase2Identity> identities;  // parallel to rows
  std::vector<double> loss_trace;
  std::vector<double> sc_trace;
  std::vector<double> tri_trace;
  bool triplet_skipped = false;
};

// Mutable training state shared by the phases.
struct TrainState {
  EncoderParams params;
  OptimizerState optimizer;
  std::mt19937_64 rng;

  static TrainState initial(std::size_t d_raw, const TrainConfig& config);
};

// Embeds the listed rows without augmentation.
Matrix embed_rows(const EncoderParams& params, const Pool& pool, std::span<const std::size_t> rows);

// Clusters the subset, builds the bank, then runs ceil(clustered / (P*I))
// InfoNCE batches, each followed by the momentum update. Throws kNoClusters.
Phase1Result run_phase1_epoch(const Pool& pool, std::span<const std::size_t> rows, TrainState& state,
                              const TrainConfig& config, double lr);

// Hardens every row of the remaining subsets against the frozen bank, then
// runs ceil(rows / (P2*I2)) batches of siamese consistency plus batch-hard
// soft-weighted triplets. `subsets[j]` holds subset j + 2.
Phase2Stats run_phase2_epoch(const Pool& pool, const std::vector<std::vector<std::size_t>>& subsets,
                             const PrototypeBank& bank, TrainState& state, const TrainConfig& config, double lr);

struct EpochSnapshot {
  std::size_t epoch = 0;
  std::size_t stage = 0;  // NaiveSplit subset being consumed; 0 otherwise
  double lr = 0.0;
  const EpochPlan* plan = nullptr;
  const Phase1Stats* phase1 = nullptr;  // null when the epoch was aborted
  const Phase2Stats* phase2 = nullptr;  // null when phase 2 did not run
  const PrototypeBank* bank = nullptr;
  const EncoderParams* params = nullptr;
  bool aborted = false;
  std::string abort_reason;
};

using EpochObserver = std::function<void(const EpochSnapshot&)>;

struct TrainResult {
  EncoderParams params;
  std::optional<PrototypeBank> bank;  // from the last completed epoch
  std::size_t aborted_epochs = 0;
};

// MCL: per epoch split, phase 1 on X1, phase 2 on the rest after warm-up.
// All: the same loop with N = 1. NaiveSplit: one fixed split; subset j gets
// its share of the epochs as phase-1 training, then is dropped.
// Ground-truth labels in `pool` are never read.
TrainResult train(const Pool& pool, const TrainConfig& config, const EpochObserver& observer = {});

}  // namespace mcl
