// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed and share no code with the
// library beyond plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

// Brute-force density clustering on a dense matrix.
//   core(i)  <=> #{j != i : d(i,j) <= eps} >= min_pts
//   cores are density-connected through the transitive closure of the
//   core-core eps graph (Warshall, O(n^3));
//   components are numbered by their smallest core index;
//   a border point takes the lowest-numbered component among adjacent cores.
inline std::vector<int> dbscan(const Dense& d, double eps, std::size_t min_pts) {
  const std::size_t n = d.size();
  auto near = [&](std::size_t i, std::size_t j) { return i != j && static_cast<float>(d[i][j]) <= static_cast<float>(eps); };
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += near(i, j);
    core[i] = c >= min_pts;
  }
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) reach[i][j] = (i == j && core[i]) || (core[i] && core[j] && near(i, j));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i][k])
        for (std::size_t j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = 1;
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] >= 0) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j]) label[j] = next;
    ++next;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near(i, j) && (best < 0 || label[j] < best)) best = label[j];
    label[i] = best;
  }
  return label;
}

// True when two labelings induce the same partition and the same -1 set.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

// k nearest off-diagonal entries by a full stable sort on (distance, index).
inline std::vector<std::vector<std::size_t>> knn(const Dense& d, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (j != i) idx.push_back(j);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return static_cast<float>(d[i][a]) != static_cast<float>(d[i][b])
                 ? static_cast<float>(d[i][a]) < static_cast<float>(d[i][b])
                 : a < b;
    });
    idx.resize(k);
    out.push_back(idx);
  }
  return out;
}

inline std::vector<std::set<std::size_t>> reciprocal(const std::vector<std::vector<std::size_t>>& nn) {
  std::vector<std::set<std::size_t>> out(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i)
    for (std::size_t j : nn[i])
      if (std::find(nn[j].begin(), nn[j].end(), i) != nn[j].end()) out[i].insert(j);
  return out;
}

// AP by enumerating every relevant position: precision at that cut-off,
// averaged over the relevant count. `relevant` is the ranked 0/1 list.
inline double average_precision(const std::vector<int>& relevant) {
  double sum = 0.0;
  int total = 0;
  for (std::size_t cut = 0; cut < relevant.size(); ++cut) {
    if (!relevant[cut]) continue;
    int hits = 0;
    for (std::size_t r = 0; r <= cut; ++r) hits += relevant[r];
    sum += static_cast<double>(hits) / static_cast<double>(cut + 1);
    ++total;
  }
  return total == 0 ? 0.0 : sum / total;
}

struct PairScores {
  double precision, recall, ari;
};

// Every unordered pair classified into same/same, same/diff, diff/same,
// diff/diff. Outliers (-1) are given unique ids first.
inline PairScores pair_scores(std::vector<long> pred, const std::vector<long>& truth) {
  long fresh = -2;
  for (auto& p : pred)
    if (p < 0) p = fresh--;
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const bool sp = pred[i] == pred[j], st = truth[i] == truth[j];
      if (sp && st) ++a;
      else if (sp) ++b;
      else if (st) ++c;
      else ++d;
    }
  PairScores s{};
  s.precision = (a + b) == 0 ? 1.0 : a / (a + b);
  s.recall = (a + c) == 0 ? 1.0 : a / (a + c);
  const double den = (a + b) * (b + d) + (a + c) * (c + d);
  s.ari = den == 0 ? 1.0 : 2.0 * (a * d - b * c) / den;
  return s;
}

// Central differences of f at x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max |a - b| over max |b|, floored so all-zero gradients compare absolutely.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / std::max(scale, 1e-6);
}

inline std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  double n = 0.0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace oracle
