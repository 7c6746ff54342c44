#include "core/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace mcl {
namespace {

double log_sum_exp(const Vector& z) {
  const double top = z.maxCoeff();
  return top + std::log((z.array() - top).exp().sum());
}

Matrix stack(std::initializer_list<const Vector*> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), (*rows.begin())->size());
  Eigen::Index r = 0;
  for (const Vector* v : rows) m.row(r++) = v->transpose();
  return m;
}

}  // namespace

LossValue infonce(const Vector& q, const PrototypeBank& bank, std::size_t positive, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidArgument, "temperature must be > 0");
  require(positive < bank.K(), "positive prototype index out of range");
  const Vector logits = (bank.W * q) / tau;
  const Vector p = softmax(logits);
  LossValue out;
  out.value = log_sum_exp(logits) - logits(static_cast<Eigen::Index>(positive));
  Vector coef = p;
  coef(static_cast<Eigen::Index>(positive)) -= 1.0;
  const Vector g = bank.W.transpose() * coef / tau;
  out.grad = g.transpose();
  return out;
}

LossValue infonce_batch(const Matrix& queries, const PrototypeBank& bank, std::span<const int> positives,
                        double tau) {
  require(positives.size() == static_cast<std::size_t>(queries.rows()), "positive count does not match batch");
  LossValue out;
  out.grad = Matrix::Zero(queries.rows(), queries.cols());
  if (queries.rows() == 0) return out;
  const double scale = 1.0 / static_cast<double>(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    require(positives[static_cast<std::size_t>(i)] >= 0, "negative positive index");
    const LossValue one = infonce(queries.row(i).transpose(), bank,
                                  static_cast<std::size_t>(positives[static_cast<std::size_t>(i)]), tau);
    out.value += scale * one.value;
    out.grad.row(i) = scale * one.grad.row(0);
  }
  return out;
}

double soft_cross_entropy(const Vector& f, const PrototypeBank& bank, const Vector& target) {
  const Vector logits = bank.W * f;
  const double lse = log_sum_exp(logits);
  return -(target.array() * (logits.array() - lse)).sum();
}

LossValue siamese_consistency(const Vector& f_s, const Vector& f_t, const PrototypeBank& bank) {
  require(bank.K() >= 1, "siamese consistency needs at least one prototype");
  const Vector p_s = soft_label(f_s, bank);
  const Vector p_t = soft_label(f_t, bank);
  // The swapped targets are the soft labels themselves, held constant.
  LossValue out;
  out.value = soft_cross_entropy(f_s, bank, p_t) + soft_cross_entropy(f_t, bank, p_s);
  // d CE(f, y)/df = W^T (p(f) - y) since y sums to one.
  const Vector g_s = bank.W.transpose() * (p_s - p_t);
  const Vector g_t = bank.W.transpose() * (p_t - p_s);
  out.grad = stack({&g_s, &g_t});
  return out;
}

double triplet_weight(const Vector& a, const Vector& p, const Vector& n, TripletWeight mode) {
  switch (mode) {
    case TripletWeight::kPlain:
      return 1.0;
    case TripletWeight::kUnclamped:
      return a.dot(p) * a.dot(n);
    case TripletWeight::kClamped:
      break;
  }
  return std::clamp(a.dot(p), 0.0, 1.0) * std::clamp(a.dot(n), 0.0, 1.0);
}

LossValue soft_weighted_triplet(const Vector& a, const Vector& p, const Vector& n, double margin,
                                TripletWeight mode) {
  const double d_ap = (a - p).squaredNorm();
  const double d_an = (a - n).squaredNorm();
  const double hinge = d_ap - d_an + margin;
  LossValue out;
  out.grad = Matrix::Zero(3, a.size());
  if (hinge <= 0.0) return out;

  const double s_ap = a.dot(p);
  const double s_an = a.dot(n);
  double w_ap = 1.0, w_an = 1.0;    // similarity factors
  double dw_ap = 0.0, dw_an = 0.0;  // their derivatives w.r.t. the raw dots
  if (mode == TripletWeight::kUnclamped) {
    w_ap = s_ap;
    w_an = s_an;
    dw_ap = dw_an = 1.0;
  } else if (mode == TripletWeight::kClamped) {
    w_ap = std::clamp(s_ap, 0.0, 1.0);
    w_an = std::clamp(s_an, 0.0, 1.0);
    dw_ap = (s_ap > 0.0 && s_ap < 1.0) ? 1.0 : 0.0;
    dw_an = (s_an > 0.0 && s_an < 1.0) ? 1.0 : 0.0;
  }
  const double w = w_ap * w_an;
  out.value = w * hinge;

  // Hinge part: d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n).
  // Weight part: dw/da = w_an dw_ap p + w_ap dw_an n, dw/dp = w_an dw_ap a,
  // dw/dn = w_ap dw_an a.
  const Vector ga = w * 2.0 * (n - p) + hinge * (w_an * dw_ap * p + w_ap * dw_an * n);
  const Vector gp = w * -2.0 * (a - p) + hinge * (w_an * dw_ap * a);
  const Vector gn = w * 2.0 * (a - n) + hinge * (w_ap * dw_an * a);
  out.grad = stack({&ga, &gp, &gn});
  return out;
}

LossValue siamese_batch(const Matrix& views, const PrototypeBank& bank) {
  require(views.rows() % 2 == 0, "siamese batch needs paired views");
  const Eigen::Index m = views.rows() / 2;
  LossValue out;
  out.grad = Matrix::Zero(views.rows(), views.cols());
  if (m == 0) return out;
  const double scale = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const LossValue one = siamese_consistency(views.row(i).transpose(), views.row(m + i).transpose(), bank);
    out.value += scale * one.value;
    out.grad.row(i) = scale * one.grad.row(0);
    out.grad.row(m + i) = scale * one.grad.row(1);
  }
  return out;
}

LossValue batch_hard_triplet(const Matrix& embeddings, std::span<const std::int64_t> identities,
                             double margin, TripletWeight mode, std::size_t* anchors_used) {
  const Eigen::Index B = embeddings.rows();
  require(identities.size() == static_cast<std::size_t>(B), "identity count does not match batch");
  LossValue out;
  out.grad = Matrix::Zero(B, embeddings.cols());

  struct Triplet {
    Eigen::Index a, p, n;
  };
  std::vector<Triplet> mined;
  for (Eigen::Index a = 0; a < B; ++a) {
    Eigen::Index pos = -1, neg = -1;
    double far = -1.0;
    double near = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j == a) continue;
      const double d = (embeddings.row(a) - embeddings.row(j)).squaredNorm();
      if (identities[static_cast<std::size_t>(j)] == identities[static_cast<std::size_t>(a)]) {
        if (d > far) far = d, pos = j;
      } else if (d < near) {
        near = d, neg = j;
      }
    }
    if (pos >= 0 && neg >= 0) mined.push_back({a, pos, neg});
  }
  if (anchors_used) *anchors_used = mined.size();
  if (mined.empty()) return out;

  const double scale = 1.0 / static_cast<double>(mined.size());
  for (const auto& t : mined) {
    const LossValue one = soft_weighted_triplet(embeddings.row(t.a).transpose(), embeddings.row(t.p).transpose(),
                                                embeddings.row(t.n).transpose(), margin, mode);
    out.value += scale * one.value;
    out.grad.row(t.a) += scale * one.grad.row(0);
    out.grad.row(t.p) += scale * one.grad.row(1);
    out.grad.row(t.n) += scale * one.grad.row(2);
  }
  return out;
}

LossValue phase2_total(const LossValue& sc, const LossValue& tri, double lambda) {
  require(std::isfinite(sc.value) && std::isfinite(tri.value) && std::isfinite(lambda),
          "phase-2 loss terms must be finite");
  LossValue out;
  out.value = sc.value + lambda * tri.value;
  if (sc.grad.size() == 0) {
    out.grad = lambda * tri.grad;
  } else if (tri.grad.size() == 0) {
    out.grad = sc.grad;
  } else {
    require(sc.grad.rows() == tri.grad.rows() && sc.grad.cols() == tri.grad.cols(),
            "phase-2 gradient shapes differ");
    out.grad = sc.grad + lambda * tri.grad;
  }
  return out;
}

}  // namespace mcl
