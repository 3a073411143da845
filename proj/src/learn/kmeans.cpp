#include <limits>

#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::learn {
namespace {

Matrix seed_centers(const Matrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Eigen::Index first = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
  centers.row(0) = x.row(first);
  chosen[first] = true;
  Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      for (Eigen::Index i = 0; i < n && pick < 0; ++i)
        if (!chosen[i]) pick = i;
    }
    centers.row(c) = x.row(pick);
    chosen[pick] = true;
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

double assign(const Matrix& x, const Matrix& centers, std::vector<int>& labels, Vector& dist2) {
  const Eigen::Index n = x.rows();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (x.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    dist2[i] = best;
    inertia += best;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iter, double tol) {
  const Eigen::Index n = x.rows();
  if (k < 1) throw DomainError("kmeans: k must be >= 1");
  if (k > n) throw DomainError("kmeans: k exceeds the number of rows");
  Rng rng = make_rng(seed, 0);
  Matrix centers = seed_centers(x, k, rng);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  Vector dist2(n);

  KMeansResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.inertia_trace.push_back(assign(x, centers, labels, dist2));
    res.iterations = it + 1;

    Matrix next = Matrix::Zero(k, x.cols());
    std::vector<double> count(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(labels[i]) += x.row(i);
      count[labels[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0.0) {
        next.row(c) /= count[c];
        continue;
      }
      // Empty cluster: move it to the point farthest from its center.
      Eigen::Index far = 0;
      dist2.maxCoeff(&far);
      next.row(c) = x.row(far);
      dist2[far] = 0.0;
    }
    const double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = std::move(next);
    if (shift < tol) break;
  }
  res.inertia = assign(x, centers, labels, dist2);
  if (res.inertia_trace.empty() || res.inertia < res.inertia_trace.back())
    res.inertia_trace.push_back(res.inertia);

  std::vector<int> mapping;
  res.labels = canonicalize_labels(labels, mapping);
  res.centers = Matrix::Zero(k, x.cols());
  int next_free = static_cast<int>(res.labels.num_clusters());
  for (int c = 0; c < k; ++c) {
    const int dst = c < static_cast<int>(mapping.size()) && mapping[c] >= 0 ? mapping[c] : next_free++;
    res.centers.row(dst) = centers.row(c);
  }
  return res;
}

}  // namespace rflow::learn
