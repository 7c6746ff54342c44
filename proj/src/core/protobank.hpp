#pragma once

#include <cstddef>
#include <span>

#include "core/cluster.hpp"
#include "core/linalg.hpp"

namespace mcl {

// Epoch-wise memory of cluster prototypes. Rebuilt from scratch each epoch;
// K follows that epoch's clustering.
struct PrototypeBank {
  Matrix W;               // K x d_emb
  double momentum = 0.2;  // weight of the old prototype in the update
  bool renormalize = true;

  std::size_t K() const { return static_cast<std::size_t>(W.rows()); }
};

// Softmax over prototype dot products; entries in (0, 1) summing to 1.
using SoftLabel = Vector;

// Row k = mean of cluster k's member embeddings (outliers ignored), rescaled
// to unit norm when `renormalize`.
PrototypeBank init_from_clusters(const Matrix& embeddings, const ClusterAssignment& assignment,
                                 double momentum = 0.2, bool renormalize = true);

// w_k <- m w_k + (1 - m) mean(batch rows labelled k), for each k present.
// Absent classes are left untouched.
void momentum_update(PrototypeBank& bank, const Matrix& batch, std::span<const int> labels);

// The bank is read as a constant; no gradient flows into it.
SoftLabel soft_label(const Vector& embedding, const PrototypeBank& bank);

// Index of the largest entry, lowest index on ties.
std::size_t harden(const SoftLabel& y);

// Numerically stable softmax of `logits`.
Vector softmax(const Vector& logits);

}  // namespace mcl
