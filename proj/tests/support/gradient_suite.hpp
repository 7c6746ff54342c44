// Finite-difference checks of every analytic loss gradient. Each check draws
// `configs` random configurations and returns the worst relative error seen.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/protobank.hpp"
#include "support/oracles.hpp"

namespace gradcheck {

using mcl::Matrix;
using mcl::PrototypeBank;
using mcl::Vector;

inline Vector to_vec(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline std::vector<double> to_std(const Matrix& m) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

inline Matrix from_std(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline Matrix random_units(std::size_t rows, std::size_t d, std::mt19937_64& rng) {
  Matrix m(rows, d);
  for (std::size_t r = 0; r < rows; ++r) m.row(static_cast<Eigen::Index>(r)) = to_vec(oracle::random_unit(d, rng)).transpose();
  return m;
}

inline PrototypeBank random_bank(std::size_t K, std::size_t d, std::mt19937_64& rng) {
  PrototypeBank b;
  b.W = random_units(K, d, rng);
  return b;
}

struct Result {
  std::size_t configs = 0;
  double worst = 0.0;
  void add(double e) {
    ++configs;
    worst = std::max(worst, e);
  }
};

inline Result infonce(std::size_t configs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Result r;
  while (r.configs < configs) {
    const std::size_t K = 2 + rng() % 11, d = 2 + rng() % 15;
    const double tau = 0.05 + 0.95 * u(rng);
    const PrototypeBank bank = random_bank(K, d, rng);
    const auto q = oracle::random_unit(d, rng);
    const std::size_t pos = rng() % K;
    const auto analytic = to_std(mcl::infonce(to_vec(q), bank, pos, tau).grad);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) { return mcl::infonce(to_vec(x), bank, pos, tau).value; }, q);
    r.add(oracle::relative_error(analytic, numeric));
  }
  return r;
}

// Targets are frozen at the unperturbed soft labels (stop-gradient).
inline Result siamese(std::size_t configs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Result r;
  while (r.configs < configs) {
    const std::size_t K = 2 + rng() % 11, d = 2 + rng() % 15;
    const PrototypeBank bank = random_bank(K, d, rng);
    const auto fs = oracle::random_unit(d, rng), ft = oracle::random_unit(d, rng);
    const Vector ys = mcl::soft_label(to_vec(fs), bank), yt = mcl::soft_label(to_vec(ft), bank);
    const auto analytic = to_std(mcl::siamese_consistency(to_vec(fs), to_vec(ft), bank).grad);
    std::vector<double> both(fs);
    both.insert(both.end(), ft.begin(), ft.end());
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) {
          const std::vector<double> a(x.begin(), x.begin() + static_cast<long>(d)), b(x.begin() + static_cast<long>(d), x.end());
          return mcl::soft_cross_entropy(to_vec(a), bank, yt) + mcl::soft_cross_entropy(to_vec(b), bank, ys);
        },
        both);
    r.add(oracle::relative_error(analytic, numeric));
  }
  return r;
}

// Active-hinge configurations away from the clamp and hinge kinks.
inline Result triplet(std::size_t configs, std::uint64_t seed, mcl::TripletWeight mode) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Result r;
  while (r.configs < configs) {
    const std::size_t d = 2 + rng() % 15;
    const auto a = oracle::random_unit(d, rng);
    // Positives and negatives near a so the dots land inside (0, 1).
    auto near = [&](double spread) {
      std::vector<double> v(a);
      for (auto& x : v) x += spread * g(rng);
      double n = 0;
      for (double x : v) n += x * x;
      for (auto& x : v) x /= std::sqrt(n);
      return v;
    };
    const auto p = near(0.3 + 0.5 * (rng() % 100) / 100.0), n = near(0.2 + 0.5 * (rng() % 100) / 100.0);
    const double margin = 0.3;
    const Vector A = to_vec(a), P = to_vec(p), N = to_vec(n);
    const double hinge = (A - P).squaredNorm() - (A - N).squaredNorm() + margin;
    const double sap = A.dot(P), san = A.dot(N);
    if (hinge < 1e-3 || sap < 1e-3 || sap > 1 - 1e-3 || san < 1e-3 || san > 1 - 1e-3) continue;
    const auto analytic = to_std(mcl::soft_weighted_triplet(A, P, N, margin, mode).grad);
    std::vector<double> all(a);
    all.insert(all.end(), p.begin(), p.end());
    all.insert(all.end(), n.begin(), n.end());
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) {
          const Matrix m = from_std(x, 3, static_cast<Eigen::Index>(d));
          return mcl::soft_weighted_triplet(m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose(), margin, mode)
              .value;
        },
        all);
    r.add(oracle::relative_error(analytic, numeric));
  }
  return r;
}

// Siamese loss over a batch of view pairs with frozen targets.
inline double frozen_siamese_batch(const Matrix& views, const PrototypeBank& bank, const std::vector<Vector>& targets) {
  const Eigen::Index m = views.rows() / 2;
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    total += mcl::soft_cross_entropy(views.row(i).transpose(), bank, targets[static_cast<std::size_t>(m + i)]) +
             mcl::soft_cross_entropy(views.row(m + i).transpose(), bank, targets[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(m);
}

struct Phase2Case {
  Matrix views;
  PrototypeBank bank;
  std::vector<std::int64_t> ids;
  double lambda = 1.0;
};

inline Phase2Case random_phase2_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Phase2Case c;
  const std::size_t d = 2 + rng() % 10, K = 2 + rng() % 6, m = 2 + rng() % 5, classes = 2 + rng() % 3;
  c.bank = random_bank(K, d, rng);
  c.views = random_units(2 * m, d, rng);
  for (std::size_t i = 0; i < m; ++i) c.ids.push_back(static_cast<std::int64_t>(rng() % classes));
  for (std::size_t i = 0; i < m; ++i) c.ids.push_back(c.ids[i]);
  c.lambda = 2.0 * u(rng);
  return c;
}

// The combined phase-2 objective against finite differences, plus exact
// linearity of the combination.
inline Result phase2_total(std::size_t configs, std::uint64_t seed, bool* linear_ok = nullptr) {
  std::mt19937_64 rng(seed);
  Result r;
  if (linear_ok) *linear_ok = true;
  while (r.configs < configs) {
    const Phase2Case c = random_phase2_case(rng);
    std::vector<Vector> targets;
    for (Eigen::Index i = 0; i < c.views.rows(); ++i) targets.push_back(mcl::soft_label(c.views.row(i).transpose(), c.bank));
    const mcl::LossValue sc = mcl::siamese_batch(c.views, c.bank);
    std::size_t used = 0;
    const mcl::LossValue tri = mcl::batch_hard_triplet(c.views, c.ids, 0.3, mcl::TripletWeight::kClamped, &used);
    const mcl::LossValue total = mcl::phase2_total(sc, tri, c.lambda);
    if (linear_ok) {
      const Matrix expect = tri.grad.size() ? Matrix(sc.grad + c.lambda * tri.grad) : sc.grad;
      if (!(total.grad - expect).isZero(0.0) || total.value != sc.value + c.lambda * tri.value) *linear_ok = false;
    }
    const auto rows = c.views.rows(), cols = c.views.cols();
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) {
          const Matrix v = from_std(x, rows, cols);
          return frozen_siamese_batch(v, c.bank, targets) +
                 c.lambda * mcl::batch_hard_triplet(v, c.ids, 0.3, mcl::TripletWeight::kClamped).value;
        },
        to_std(c.views));
    r.add(oracle::relative_error(to_std(total.grad), numeric));
  }
  return r;
}

// Loss gradients pushed through the encoder, checked against finite
// differences over every parameter. kind: 0 infonce, 1 siamese, 2 triplet.
inline Result through_encoder(std::size_t configs, std::uint64_t seed, int kind) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Result r;
  while (r.configs < configs) {
    const std::size_t d_raw = 2 + rng() % 6, d_h = (rng() % 3 == 0) ? 0 : 1 + rng() % 6, d_emb = 2 + rng() % 5;
    mcl::EncoderParams params = mcl::EncoderParams::identity_init(d_raw, d_h, d_emb, rng(), 0.5);
    for (Eigen::Index i = 0; i < params.b1.size(); ++i) params.b1(i) = 0.3 * g(rng);
    for (Eigen::Index i = 0; i < params.b2.size(); ++i) params.b2(i) = 0.3 * g(rng);
    const std::size_t B = kind == 2 ? 3 : 2;
    Matrix x(B, d_raw);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    const PrototypeBank bank = random_bank(2 + rng() % 4, d_emb, rng);
    const std::size_t pos = rng() % bank.K();

    const mcl::EncodeCache cache = mcl::encode_batch(params, x);
    const Matrix& e = cache.out;
    std::vector<Vector> targets;
    for (Eigen::Index i = 0; i < e.rows(); ++i) targets.push_back(mcl::soft_label(e.row(i).transpose(), bank));

    auto loss = [&](const Matrix& emb) -> mcl::LossValue {
      if (kind == 0) {
        mcl::LossValue l = mcl::infonce(emb.row(0).transpose(), bank, pos, 0.1);
        Matrix grad = Matrix::Zero(emb.rows(), emb.cols());
        grad.row(0) = l.grad.row(0);
        l.grad = grad;
        return l;
      }
      if (kind == 1) {
        mcl::LossValue l;
        l.value = mcl::soft_cross_entropy(emb.row(0).transpose(), bank, targets[1]) +
                  mcl::soft_cross_entropy(emb.row(1).transpose(), bank, targets[0]);
        l.grad = mcl::siamese_consistency(emb.row(0).transpose(), emb.row(1).transpose(), bank).grad;
        return l;
      }
      return mcl::soft_weighted_triplet(emb.row(0).transpose(), emb.row(1).transpose(), emb.row(2).transpose(), 1.5,
                                        mcl::TripletWeight::kUnclamped);
    };
    const mcl::LossValue at = loss(e);
    if (kind == 2 && at.value == 0.0) continue;  // dead hinge, nothing to check
    const auto analytic = mcl::encode_backward(params, cache, at.grad).flatten();
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& flat) {
          mcl::EncoderParams p = params;
          p.assign_flat(flat);
          const Matrix emb = mcl::encode_batch(p, x).out;
          if (kind == 1)
            return mcl::soft_cross_entropy(emb.row(0).transpose(), bank, targets[1]) +
                   mcl::soft_cross_entropy(emb.row(1).transpose(), bank, targets[0]);
          return loss(emb).value;
        },
        params.flatten());
    // A saturated loss (softmax already one-hot) has gradients below what
    // central differences resolve in double; those draws carry no signal.
    double scale = 0.0;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    if (scale < 1e-4) continue;
    r.add(oracle::relative_error(analytic, numeric));
  }
  return r;
}

}  // namespace gradcheck
