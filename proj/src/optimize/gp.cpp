#include "rflow/optimize/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"

namespace rflow::optimize {

namespace {

constexpr double kSqrt5 = 2.23606797749979;

struct Hyper {
  Eigen::VectorXd log_length;
  double log_signal = 0.0;
  double log_noise = 0.0;
};

// Squared scaled distance between rows i, j is accumulated per dim so the
// gradient can reuse it.
struct Evaluated {
  double lml = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad_length;
  double grad_signal = 0.0;
  double grad_noise = 0.0;
};

Evaluated evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Hyper& h, bool want_grad) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::VectorXd inv_l2 = (-2.0 * h.log_length.array()).exp();
  const double sf = std::exp(h.log_signal), sn = std::exp(h.log_noise);
  Eigen::MatrixXd r(n, n), k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r2 = ((x.row(i) - x.row(j)).array().square() * inv_l2.transpose().array()).sum();
      r(i, j) = r(j, i) = std::sqrt(r2);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = kSqrt5 * r(i, j);
      k(i, j) = sf * (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
  Eigen::MatrixXd kn = k;
  kn.diagonal().array() += sn + 1e-12;
  Eigen::LLT<Eigen::MatrixXd> llt(kn);
  Evaluated out;
  if (llt.info() != Eigen::Success) return out;
  const Eigen::VectorXd alpha = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.lml = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.lml)) {
    out.lml = -std::numeric_limits<double>::infinity();
    return out;
  }
  if (!want_grad) return out;
  // dL/dtheta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
  const Eigen::MatrixXd inner = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.grad_signal = 0.5 * (inner.array() * k.array()).sum();
  out.grad_noise = 0.5 * inner.trace() * sn;
  out.grad_length = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double s = kSqrt5 * r(i, j);
      const double base = (5.0 / 3.0) * sf * (1.0 + s) * std::exp(-s) * inner(i, j);
      // symmetric pair counted twice, halved by the 0.5 prefactor
      out.grad_length.array() += base * (x.row(i) - x.row(j)).array().square().transpose() * inv_l2.array();
    }
  return out;
}

double clamp_log(double v, double lo, double hi) { return std::clamp(v, std::log(lo), std::log(hi)); }

}  // namespace

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mean, double sd, double best) {
  if (!(sd > 1e-12)) return std::max(0.0, best - mean);
  const double z = (best - mean) / sd;
  return (best - mean) * normal_cdf(z) + sd * normal_pdf(z);
}

void GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed,
                          const GpOptions& opts) {
  if (x.rows() == 0 || x.rows() != y.size()) throw DomainError("gp: empty or mismatched training data");
  const Eigen::Index d = x.cols();
  x_ = x;
  y_mean_ = y.mean();
  const double var = y.size() > 1 ? (y.array() - y_mean_).square().sum() / static_cast<double>(y.size() - 1) : 0.0;
  y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean_) / y_scale_;
  best_ = ys.minCoeff();

  const double lo_l = std::log(opts.min_length), hi_l = std::log(opts.max_length);
  Rng rng = make_rng(seed, 0);
  Hyper best_h;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
    Hyper h;
    h.log_length = Eigen::VectorXd::Constant(d, std::log(0.5));
    h.log_signal = 0.0;
    h.log_noise = opts.fixed_noise ? std::log(*opts.fixed_noise) : std::log(1e-3);
    if (restart > 0) {
      for (Eigen::Index j = 0; j < d; ++j) h.log_length[j] = std::log(0.05) + uniform01(rng) * (std::log(2.0) - std::log(0.05));
      h.log_signal = -1.0 + 2.0 * uniform01(rng);
      if (!opts.fixed_noise) h.log_noise = std::log(1e-6) + uniform01(rng) * (std::log(1e-1) - std::log(1e-6));
    }
    // Adam ascent on the log marginal likelihood
    const Eigen::Index np = d + 2;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(np), v = Eigen::VectorXd::Zero(np);
    const double b1 = 0.9, b2 = 0.999;
    for (int it = 0; it <= opts.iterations; ++it) {
      const Evaluated e = evaluate(x_, ys, h, it < opts.iterations);
      if (e.lml > best_lml) {
        best_lml = e.lml;
        best_h = h;
      }
      if (it == opts.iterations || !std::isfinite(e.lml)) break;
      Eigen::VectorXd g(np);
      g.head(d) = e.grad_length;
      g[d] = e.grad_signal;
      g[d + 1] = opts.fixed_noise ? 0.0 : e.grad_noise;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g.cwiseAbs2();
      const double c1 = 1 - std::pow(b1, it + 1), c2 = 1 - std::pow(b2, it + 1);
      const Eigen::VectorXd step = opts.learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + 1e-8);
      for (Eigen::Index j = 0; j < d; ++j) h.log_length[j] = std::clamp(h.log_length[j] + step[j], lo_l, hi_l);
      h.log_signal = std::clamp(h.log_signal + step[d], -6.0, 6.0);
      if (!opts.fixed_noise) h.log_noise = clamp_log(h.log_noise + step[d + 1], opts.min_noise, opts.max_noise);
    }
  }
  if (!std::isfinite(best_lml)) throw DomainError("gp: kernel matrix is not positive definite");

  length_ = best_h.log_length.array().exp();
  signal_ = std::exp(best_h.log_signal);
  noise_ = std::exp(best_h.log_noise);
  lml_ = best_lml;
  Eigen::MatrixXd k(x_.rows(), x_.rows());
  for (Eigen::Index i = 0; i < x_.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(x_.row(i), x_.row(j));
  k.diagonal().array() += noise_ + 1e-12;
  llt_.compute(k);
  alpha_ = llt_.solve(ys);
}

double GaussianProcess::kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
  const double r = std::sqrt(((a - b).array() / length_.transpose().array()).square().sum());
  const double s = kSqrt5 * r;
  return signal_ * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

void GaussianProcess::predict(const Eigen::RowVectorXd& x, double& mean, double& variance) const {
  Eigen::VectorXd ks(x_.rows());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) ks[i] = kernel(x, x_.row(i));
  const double m = ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var = std::max(0.0, signal_ - v.squaredNorm());
  mean = y_mean_ + y_scale_ * m;
  variance = var * y_scale_ * y_scale_;
}

}  // namespace rflow::optimize
