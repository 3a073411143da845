#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rflow::learn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// ---------------------------------------------------------------------------
// Labels

/// Cluster assignment per row. -1 marks an unassigned row.
struct ClusterLabels {
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  int num_clusters() const;  // max label + 1
  std::vector<std::size_t> cluster_sizes() const;
  bool operator==(const ClusterLabels&) const = default;
};

/// Relabels so cluster sizes are non-increasing with label index; equal sizes
/// are ordered by first occurrence. Negative labels pass through unchanged.
ClusterLabels canonicalize_labels(const std::vector<int>& raw);

/// Same relabeling, also returning old label -> new label.
ClusterLabels canonicalize_labels(const std::vector<int>& raw, std::vector<int>& mapping);

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  RowVector mean;
  Matrix components;  // n_components x dim, orthonormal rows
  Vector explained_variance;
  double total_variance = 0.0;

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index n_components() const { return components.rows(); }
};

/// Mean-centered SVD. Each component's largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& x, Eigen::Index n_components);
Matrix pca_transform(const PcaModel& m, const Matrix& x);

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  ClusterLabels labels;
  Matrix centers;                     // row i is the center of canonical label i
  std::vector<double> inertia_trace;  // per Lloyd iteration
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding and Lloyd iterations until the largest center shift is
/// below `tol` or `max_iter` iterations ran.
KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iter = 300,
                    double tol = 1e-6);

// ---------------------------------------------------------------------------
// Gaussian mixtures

enum class CovarianceType { full, tied, diag, spherical };

std::string to_string(CovarianceType t);
CovarianceType parse_covariance_type(const std::string& s);
const std::vector<std::string>& covariance_type_names();

struct GmmOptions {
  double tol = 1e-6;  // stop when the mean log-likelihood gain drops below tol
  int max_iter = 200;
  double reg = 1e-6;  // added to covariance diagonals
  int n_init = 1;     // k-means restarts; the best final log-likelihood wins
  std::optional<double> assign_threshold;  // posterior cutoff; below it -> -1
  /// A component holding less mass than this (but not empty) is a singular
  /// fit: EM restarts from a fresh k-means seed, up to 10 times.
  double min_component_mass = 0.0;
};

struct GmmModel {
  int n_components = 0;
  CovarianceType covariance_type = CovarianceType::full;
  Vector weights;
  Matrix means;  // K x dim
  /// full: K matrices; tied: 1 matrix; diag: K x dim (row = variances);
  /// spherical: K x 1.
  std::vector<Matrix> covariances;
  Matrix diag_variances;
  std::vector<double> log_likelihood_trace;  // mean per-sample log-likelihood
  std::vector<std::string> warnings;
  std::optional<double> assign_threshold;
  bool converged = false;

  Eigen::Index dim() const { return means.cols(); }
  /// Smallest eigenvalue over all component covariances.
  double min_covariance_eigenvalue() const;
};

GmmModel gmm_fit(const Matrix& x, int k, CovarianceType type, std::uint64_t seed,
                 const GmmOptions& opts = {});

/// Posterior responsibilities (rows sum to 1).
Matrix gmm_responsibilities(const GmmModel& m, const Matrix& x);
/// Per-row log p(x) under the mixture.
Vector gmm_log_density(const GmmModel& m, const Matrix& x);

/// Argmax posterior (component index, not canonicalized).
std::vector<int> gmm_assign(const GmmModel& m, const Matrix& x);
/// Argmax posterior, canonicalized.
ClusterLabels gmm_predict(const GmmModel& m, const Matrix& x);

/// Text record with covariance type tag, weights, means and covariances.
std::string gmm_to_text(const GmmModel& m);

}  // namespace rflow::learn
