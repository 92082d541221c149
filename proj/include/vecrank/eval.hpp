#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vecrank/models.hpp"

namespace vecrank {

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns eigenvalues in `values` and matching eigenvectors as columns of
/// `vectors` (row-major n x n), in no particular order.
inline void jacobi_eigen(std::vector<std::vector<double>> a,
                         std::vector<double>& values,
                         std::vector<std::vector<double>>& vectors) {
  const std::size_t n = a.size();
  for (const auto& row : a) {
    if (row.size() != n) {
      throw std::invalid_argument("jacobi_eigen: matrix must be square");
    }
  }
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;

  constexpr int kMaxSweeps = 100;
  constexpr double kTol = 1e-14;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < kTol * kTol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i][p];
          const double aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p][i];
          const double aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = vectors[i][p];
          const double viq = vectors[i][q];
          vectors[i][p] = c * vip - s * viq;
          vectors[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
}

/// Singular values of a dense m x n matrix (rows as vectors), descending.
/// Diagonalizes the n x n Gram matrix by cyclic Jacobi rotations applied
/// one-sided to the columns of A, so each rotation annihilates a Gram
/// off-diagonal from freshly accumulated column inner products. Forming the
/// Gram matrix explicitly would cap the accuracy of the small singular
/// values near sqrt(eps) * s1, too coarse for the rank diagnostics; the
/// one-sided form keeps them accurate. The result is verified against the
/// explicit Gram matrix through the V factor before values are returned.
inline std::vector<double> singular_values(
    const std::vector<std::vector<double>>& a) {
  if (a.empty() || a[0].empty()) {
    throw std::invalid_argument("singular_values: empty matrix");
  }
  const std::size_t m = a.size();
  const std::size_t n = a[0].size();
  for (const auto& row : a) {
    if (row.size() != n) {
      throw std::invalid_argument("singular_values: ragged matrix");
    }
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("singular_values: non-finite entry");
      }
    }
  }

  std::vector<std::vector<double>> u = a;  // columns rotated in place
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  constexpr int kMaxSweeps = 60;
  constexpr double kOrthTol = 1e-15;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, g = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += u[i][p] * u[i][p];
          beta += u[i][q] * u[i][q];
          g += u[i][p] * u[i][q];
        }
        if (std::abs(g) <= kOrthTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * g);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(zeta) + std::sqrt(zeta * zeta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double uip = u[i][p];
          const double uiq = u[i][q];
          u[i][p] = c * uip - s * uiq;
          u[i][q] = s * uip + c * uiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i][p];
          const double viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t j = 0; j < n; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) ss += u[i][j] * u[i][j];
    sv[j] = std::sqrt(ss);
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double gram = 0.0;
      for (std::size_t r = 0; r < m; ++r) gram += a[r][i] * a[r][j];
      double rec = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        rec += v[i][k] * sv[k] * sv[k] * v[j][k];
      }
      worst = std::max(worst, std::abs(rec - gram));
    }
  }
  if (worst > 1e-10) {
    throw std::runtime_error("singular_values: decomposition failed");
  }

  std::vector<double> sorted(n);
  for (std::size_t j = 0; j < n; ++j) sorted[j] = sv[order[j]];
  return sorted;
}

/// Precision-weighted average of per-document Gaussians, the maximizer of
/// sum_i log N(v; mu_i, sigma_i^2) applied coordinate-wise:
/// v_k = (sum_i mu_ik / sigma_ik^2) / (sum_i 1 / sigma_ik^2).
inline std::vector<double> compute_base_vector(
    const std::vector<GaussianEstimate>& estimates) {
  if (estimates.empty()) {
    throw std::invalid_argument("compute_base_vector: no estimates");
  }
  const std::size_t d = estimates[0].mu.size();
  std::vector<double> numer(d, 0.0);
  std::vector<double> denom(d, 0.0);
  for (const auto& est : estimates) {
    if (est.mu.size() != d || est.log_var.size() != d) {
      throw std::invalid_argument("compute_base_vector: dim mismatch");
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double inv_var = std::exp(-est.log_var[k]);
      numer[k] += est.mu[k] * inv_var;
      denom[k] += inv_var;
    }
  }
  std::vector<double> v(d);
  for (std::size_t k = 0; k < d; ++k) v[k] = numer[k] / denom[k];
  return v;
}

/// Document indices sorted by score, stable descending, so equal scores keep
/// their original order.
inline std::vector<int> rank_by_score(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return scores[x] > scores[y]; });
  return order;
}

/// A scored ranking of one query's documents.
struct RankedList {
  std::int64_t qid = 0;
  std::vector<int> order;        // doc indices, best first
  std::vector<double> scores;    // parallel to order
};

/// nDCG@k over labels read in ranked order, with gain 2^label - 1 and
/// discount log2(rank + 1). Queries whose ideal DCG is zero score 1.0.
inline double ndcg_at_k(const std::vector<int>& ranked_labels, int k) {
  if (k <= 0) throw std::invalid_argument("ndcg_at_k: k must be positive");
  const std::size_t depth =
      std::min<std::size_t>(ranked_labels.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    dcg += (std::pow(2.0, ranked_labels[i]) - 1.0) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal = ranked_labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(depth, ideal.size()); ++i) {
    idcg += (std::pow(2.0, ideal[i]) - 1.0) /
            std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return 1.0;
  return dcg / idcg;
}

/// nDCG@k of a ranking given the query's documents.
inline double ndcg_of_ranking(const QueryList& query,
                              const std::vector<int>& order, int k) {
  std::vector<int> labels;
  labels.reserve(order.size());
  for (int idx : order) labels.push_back(query.docs[idx].label);
  return ndcg_at_k(labels, k);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and (population) standard deviation.
inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_std: empty input");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

}  // namespace vecrank
