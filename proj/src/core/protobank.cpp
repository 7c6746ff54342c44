#include "core/protobank.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"

namespace mcl {
namespace {

void normalize_row(Matrix& W, Eigen::Index k) {
  const double norm = W.row(k).norm();
  if (norm >= 1e-12) W.row(k) /= norm;
}

}  // namespace

PrototypeBank init_from_clusters(const Matrix& embeddings, const ClusterAssignment& assignment,
                                 double momentum, bool renormalize) {
  if (assignment.K == 0) fail(ErrorCode::kNoClusters, "no clusters: cannot initialize prototypes");
  require(assignment.labels.size() == static_cast<std::size_t>(embeddings.rows()),
          "assignment size does not match embeddings");
  require(momentum >= 0.0 && momentum <= 1.0, "momentum must be in [0, 1]");

  PrototypeBank bank;
  bank.momentum = momentum;
  bank.renormalize = renormalize;
  bank.W = Matrix::Zero(static_cast<Eigen::Index>(assignment.K), embeddings.cols());
  std::vector<std::size_t> counts(assignment.K, 0);
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    const int c = assignment.labels[i];
    if (c == ClusterAssignment::kOutlier) continue;
    bank.W.row(c) += embeddings.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(c)];
  }
  for (std::size_t k = 0; k < assignment.K; ++k) {
    if (counts[k] == 0) fail(ErrorCode::kInvalidArgument, "cluster " + std::to_string(k) + " has no members");
    const auto row = static_cast<Eigen::Index>(k);
    bank.W.row(row) /= static_cast<double>(counts[k]);
    if (renormalize) normalize_row(bank.W, row);
  }
  return bank;
}

void momentum_update(PrototypeBank& bank, const Matrix& batch, std::span<const int> labels) {
  require(labels.size() == static_cast<std::size_t>(batch.rows()), "label count does not match batch");
  require(batch.cols() == bank.W.cols(), "batch dimension does not match prototypes");
  const std::size_t K = bank.K();
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= K)
      fail(ErrorCode::kInvalidArgument, "pseudo label " + std::to_string(label) + " out of range");

  Matrix sums = Matrix::Zero(bank.W.rows(), bank.W.cols());
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sums.row(labels[i]) += batch.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  const double m = bank.momentum;
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k] == 0) continue;
    const auto row = static_cast<Eigen::Index>(k);
    bank.W.row(row) = m * bank.W.row(row) + (1.0 - m) * (sums.row(row) / static_cast<double>(counts[k]));
    if (bank.renormalize) normalize_row(bank.W, row);
  }
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

SoftLabel soft_label(const Vector& embedding, const PrototypeBank& bank) {
  require(bank.K() >= 1, "soft labeling needs at least one prototype");
  require(embedding.size() == bank.W.cols(), "embedding dimension does not match prototypes");
  return softmax(bank.W * embedding);
}

std::size_t harden(const SoftLabel& y) {
  require(y.size() >= 1, "empty soft label");
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < y.size(); ++j)
    if (y(j) > y(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
  return best;
}

}  // namespace mcl
