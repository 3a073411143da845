#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::learn {

std::string to_string(CovarianceType t) {
  switch (t) {
    case CovarianceType::full: return "full";
    case CovarianceType::tied: return "tied";
    case CovarianceType::diag: return "diag";
    case CovarianceType::spherical: return "spherical";
  }
  return "full";
}

CovarianceType parse_covariance_type(const std::string& s) {
  if (s == "full") return CovarianceType::full;
  if (s == "tied") return CovarianceType::tied;
  if (s == "diag") return CovarianceType::diag;
  if (s == "spherical") return CovarianceType::spherical;
  throw ConfigError("unknown covariance type: " + s);
}

const std::vector<std::string>& covariance_type_names() {
  static const std::vector<std::string> names{"full", "tied", "diag", "spherical"};
  return names;
}

double GmmModel::min_covariance_eigenvalue() const {
  double lo = std::numeric_limits<double>::infinity();
  if (covariance_type == CovarianceType::full || covariance_type == CovarianceType::tied) {
    for (const auto& c : covariances) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
    }
  } else {
    lo = diag_variances.minCoeff();
  }
  return lo;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kMinMass = 1e-6;

// Per-component log N(x | mu_k, Sigma_k), n x K.
Matrix component_log_prob(const GmmModel& m, const Matrix& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const int k = m.n_components;
  Matrix out(n, k);
  const bool dense = m.covariance_type == CovarianceType::full || m.covariance_type == CovarianceType::tied;
  Eigen::LLT<Matrix> tied_llt;
  if (m.covariance_type == CovarianceType::tied) tied_llt.compute(m.covariances[0]);
  for (int c = 0; c < k; ++c) {
    const Matrix diff = x.rowwise() - m.means.row(c);
    if (dense) {
      Eigen::LLT<Matrix> own;
      const Eigen::LLT<Matrix>* llt = &tied_llt;
      if (m.covariance_type == CovarianceType::full) {
        own.compute(m.covariances[c]);
        llt = &own;
      }
      if (llt->info() != Eigen::Success) throw DomainError("GMM covariance is not positive definite");
      const Matrix l = llt->matrixL();
      const double logdet = 2.0 * l.diagonal().array().log().sum();
      const Matrix y = l.triangularView<Eigen::Lower>().solve(diff.transpose());
      out.col(c) = -0.5 * (y.colwise().squaredNorm().transpose().array() + d * kLog2Pi + logdet);
    } else {
      const Eigen::ArrayXd var = m.diag_variances.row(c).transpose().array();
      const Eigen::ArrayXd inv = var.inverse();
      const double logdet = var.log().sum();
      const Vector maha = diff.array().square().matrix() * inv.matrix();
      out.col(c) = -0.5 * (maha.array() + d * kLog2Pi + logdet);
    }
  }
  return out;
}

// Weighted log probabilities, log-sum-exp per row, normalized responsibilities.
struct EStep {
  Matrix resp;
  Vector log_norm;
};

EStep e_step(const GmmModel& m, const Matrix& x) {
  Matrix lp = component_log_prob(m, x);
  lp.rowwise() += m.weights.array().log().matrix().transpose();
  EStep e;
  e.log_norm.resize(x.rows());
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    const double mx = lp.row(i).maxCoeff();
    const double s = (lp.row(i).array() - mx).exp().sum();
    e.log_norm[i] = mx + std::log(s);
  }
  e.resp = (lp.colwise() - e.log_norm).array().exp();
  return e;
}

void m_step(GmmModel& m, const Matrix& x, const Matrix& resp, double reg) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const int k = m.n_components;
  const Vector nk = resp.colwise().sum().transpose().array() + 10.0 * std::numeric_limits<double>::epsilon();
  m.weights = nk / static_cast<double>(n);
  m.means = (resp.transpose() * x).array().colwise() / nk.array();
  m.covariances.clear();
  m.diag_variances.resize(0, 0);
  switch (m.covariance_type) {
    case CovarianceType::full:
      for (int c = 0; c < k; ++c) {
        const Matrix diff = x.rowwise() - m.means.row(c);
        const Matrix w = diff.array().colwise() * resp.col(c).array().sqrt();
        Matrix cov = (w.transpose() * w) / nk[c];
        cov.diagonal().array() += reg;
        m.covariances.push_back(std::move(cov));
      }
      break;
    case CovarianceType::tied: {
      Matrix cov = Matrix::Zero(d, d);
      for (int c = 0; c < k; ++c) {
        const Matrix diff = x.rowwise() - m.means.row(c);
        const Matrix w = diff.array().colwise() * resp.col(c).array().sqrt();
        cov.noalias() += w.transpose() * w;
      }
      cov /= nk.sum();
      cov.diagonal().array() += reg;
      m.covariances.push_back(std::move(cov));
      break;
    }
    case CovarianceType::diag:
    case CovarianceType::spherical: {
      Matrix var(k, d);
      for (int c = 0; c < k; ++c) {
        const Matrix diff = x.rowwise() - m.means.row(c);
        var.row(c) = (resp.col(c).transpose() * diff.array().square().matrix()) / nk[c];
      }
      var.array() += reg;
      if (m.covariance_type == CovarianceType::spherical) {
        const Vector s = var.rowwise().mean();
        var = s.replicate(1, d);
        m.covariances.push_back(s);
      } else {
        m.covariances.push_back(var);
      }
      m.diag_variances = var;
      break;
    }
  }
}

Matrix hard_resp(const std::vector<int>& labels, int k) {
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) r(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return r;
}

struct Collapsed {};

GmmModel fit_once(const Matrix& x, int k, CovarianceType type, std::uint64_t seed,
                  const GmmOptions& opts) {
  GmmModel m;
  m.n_components = k;
  m.covariance_type = type;
  m.assign_threshold = opts.assign_threshold;

  const KMeansResult km = kmeans(x, k, seed);
  Matrix resp = hard_resp(km.labels.labels, k);
  m_step(m, x, resp, opts.reg);
  EStep e = e_step(m, x);
  double ll = e.log_norm.mean();
  m.log_likelihood_trace.push_back(ll);

  int reseeds = 0;
  for (int it = 0; it < opts.max_iter; ++it) {
    resp = e.resp;
    const Vector mass = resp.colwise().sum().transpose();
    Eigen::Index empty = -1;
    for (int c = 0; c < k && empty < 0; ++c)
      if (mass[c] < kMinMass) empty = c;
    if (empty < 0)
      for (int c = 0; c < k; ++c)
        if (mass[c] < opts.min_component_mass) throw Collapsed{};
    if (empty >= 0) {
      if (++reseeds > 10) throw DomainError("GMM component collapse could not be repaired");
      // Give the empty component the worst-explained row and restart the trace.
      Eigen::Index worst = 0;
      e.log_norm.minCoeff(&worst);
      resp.row(worst).setZero();
      resp(worst, empty) = 1.0;
      std::ostringstream msg;
      msg << "component " << empty << " became empty at iteration " << it << "; reseeded at row " << worst;
      m.warnings.push_back(msg.str());
      m_step(m, x, resp, opts.reg);
      e = e_step(m, x);
      ll = e.log_norm.mean();
      m.log_likelihood_trace.assign(1, ll);
      continue;
    }

    GmmModel next = m;
    m_step(next, x, resp, opts.reg);
    EStep ne = e_step(next, x);
    const double nll = ne.log_norm.mean();
    if (!std::isfinite(nll) || nll < ll) {
      // The regularized update can lower the likelihood by a hair; keep the old model.
      m.converged = true;
      break;
    }
    m = std::move(next);
    e = std::move(ne);
    m.log_likelihood_trace.push_back(nll);
    const double gain = nll - ll;
    ll = nll;
    if (gain < opts.tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

}  // namespace

GmmModel gmm_fit(const Matrix& x, int k, CovarianceType type, std::uint64_t seed, const GmmOptions& opts) {
  if (k < 1) throw DomainError("gmm_fit: K must be >= 1");
  if (x.rows() < k) throw DomainError("gmm_fit: fewer rows than components");
  if (x.cols() < 1) throw DomainError("gmm_fit: empty descriptors");
  if (!x.allFinite()) throw DomainError("gmm_fit: non-finite input");
  if (opts.reg < 0.0) throw DomainError("gmm_fit: negative regularization");
  const int restarts = std::max(1, opts.n_init);
  GmmModel best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    GmmModel m;
    for (int attempt = 0;; ++attempt) {
      try {
        const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(r));
        m = fit_once(x, k, type, attempt == 0 ? s : derive_seed(s, 1000 + attempt), opts);
        if (attempt > 0) m.warnings.push_back("singular component; refit from k-means seed attempt " + std::to_string(attempt));
        break;
      } catch (const Collapsed&) {
        if (attempt >= 10) throw DomainError("GMM keeps collapsing onto too few samples");
      }
    }
    if (!have || m.log_likelihood_trace.back() > best.log_likelihood_trace.back()) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

Matrix gmm_responsibilities(const GmmModel& m, const Matrix& x) {
  if (x.cols() != m.dim()) throw DomainError("GMM: column count does not match the model");
  return e_step(m, x).resp;
}

Vector gmm_log_density(const GmmModel& m, const Matrix& x) {
  if (x.cols() != m.dim()) throw DomainError("GMM: column count does not match the model");
  return e_step(m, x).log_norm;
}

std::vector<int> gmm_assign(const GmmModel& m, const Matrix& x) {
  const Matrix r = gmm_responsibilities(m, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Eigen::Index arg = 0;
    const double p = r.row(i).maxCoeff(&arg);
    out[i] = (m.assign_threshold && p < *m.assign_threshold) ? -1 : static_cast<int>(arg);
  }
  return out;
}

ClusterLabels gmm_predict(const GmmModel& m, const Matrix& x) { return canonicalize_labels(gmm_assign(m, x)); }

std::string gmm_to_text(const GmmModel& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "covariance_type " << to_string(m.covariance_type) << "\n";
  os << "n_components " << m.n_components << "\n";
  os << "dim " << m.dim() << "\n";
  for (int c = 0; c < m.n_components; ++c) {
    os << "component " << c << "\nweight " << m.weights[c] << "\nmean";
    for (Eigen::Index j = 0; j < m.dim(); ++j) os << ' ' << m.means(c, j);
    os << "\ncovariance";
    switch (m.covariance_type) {
      case CovarianceType::full:
        for (Eigen::Index i = 0; i < m.covariances[c].size(); ++i) os << ' ' << m.covariances[c].data()[i];
        break;
      case CovarianceType::tied:
        os << " tied";
        break;
      case CovarianceType::diag:
        for (Eigen::Index j = 0; j < m.dim(); ++j) os << ' ' << m.diag_variances(c, j);
        break;
      case CovarianceType::spherical:
        os << ' ' << m.diag_variances(c, 0);
        break;
    }
    os << "\n";
  }
  if (m.covariance_type == CovarianceType::tied) {
    os << "tied_covariance";
    for (Eigen::Index i = 0; i < m.covariances[0].size(); ++i) os << ' ' << m.covariances[0].data()[i];
    os << "\n";
  }
  return os.str();
}

}  // namespace rflow::learn
