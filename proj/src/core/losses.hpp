#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "core/linalg.hpp"
#include "core/protobank.hpp"

namespace mcl {

// A loss and its gradient w.r.t. the embeddings it was computed from; row r
// of `grad` belongs to input row r.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

// -log softmax(q . W / tau)[positive]. Gradient w.r.t. q only (1 x d).
LossValue infonce(const Vector& q, const PrototypeBank& bank, std::size_t positive, double tau);

// Batch mean of infonce over the rows of `queries`.
LossValue infonce_batch(const Matrix& queries, const PrototypeBank& bank, std::span<const int> positives,
                        double tau);

// Cross-entropy between a fixed target distribution and softmax(W f).
double soft_cross_entropy(const Vector& f, const PrototypeBank& bank, const Vector& target);

// CE(f_s, y_t) + CE(f_t, y_s) with y = soft_label(., bank) held constant.
// Gradient rows: {f_s, f_t}.
LossValue siamese_consistency(const Vector& f_s, const Vector& f_t, const PrototypeBank& bank);

enum class TripletWeight {
  kClamped,    // clamp(<a,p>,0,1) * clamp(<a,n>,0,1)
  kUnclamped,  // <a,p> * <a,n> as written
  kPlain,      // 1
};

double triplet_weight(const Vector& a, const Vector& p, const Vector& n, TripletWeight mode);

// w(a,p,n) * [|a-p|^2 - |a-n|^2 + margin]_+. Gradient rows: {a, p, n}, with
// the weight differentiated too.
LossValue soft_weighted_triplet(const Vector& a, const Vector& p, const Vector& n, double margin,
                                TripletWeight mode = TripletWeight::kClamped);

// Rows [0, m) are first views and [m, 2m) second views of the same m samples.
// Mean siamese consistency over the pairs.
LossValue siamese_batch(const Matrix& views, const PrototypeBank& bank);

// Batch-hard mining: for every anchor row, the farthest row with the same
// identity and the nearest row with a different identity. Anchors lacking
// either are skipped. Mean over the used anchors.
LossValue batch_hard_triplet(const Matrix& embeddings, std::span<const std::int64_t> identities,
                             double margin, TripletWeight mode = TripletWeight::kClamped,
                             std::size_t* anchors_used = nullptr);

// sc + lambda * tri, gradients combined the same way. Either gradient may be
// empty (an absent term).
LossValue phase2_total(const LossValue& sc, const LossValue& tri, double lambda);

}  // namespace mcl
