#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace rflow::optimize {

struct GpOptions {
  int restarts = 5;
  int iterations = 100;  // Adam steps per restart
  double learning_rate = 0.05;
  std::optional<double> fixed_noise;  // pins the noise variance
  double min_length = 1e-3;
  double max_length = 10.0;
  double min_noise = 1e-8;
  double max_noise = 1.0;
};

/// Zero-mean GP on standardized targets with an ARD Matern 5/2 kernel.
class GaussianProcess {
 public:
  /// Rows of x are inputs in the unit cube. Throws DomainError when empty
  /// or when no restart yields a positive definite kernel matrix.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed, const GpOptions& opts = {});

  /// Posterior mean and variance (latent function, original target units).
  void predict(const Eigen::RowVectorXd& x, double& mean, double& variance) const;

  double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const;
  double log_marginal_likelihood() const noexcept { return lml_; }

  const Eigen::VectorXd& length_scales() const noexcept { return length_; }
  double signal_variance() const noexcept { return signal_; }
  double noise_variance() const noexcept { return noise_; }
  /// Smallest standardized target.
  double best_target() const noexcept { return best_; }
  double y_mean() const noexcept { return y_mean_; }
  double y_scale() const noexcept { return y_scale_; }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd length_;
  double signal_ = 1.0;
  double noise_ = 1e-4;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double best_ = 0.0;
  double lml_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/// Expected improvement below `best` for a Gaussian predictive (mean, sd).
double expected_improvement(double mean, double sd, double best);

double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace rflow::optimize
