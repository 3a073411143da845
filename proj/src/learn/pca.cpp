#include <Eigen/SVD>

#include "rflow/core/errors.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::learn {

PcaModel pca_fit(const Matrix& x, Eigen::Index n_components) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw DomainError("pca_fit needs at least 2 rows");
  if (n_components < 1 || n_components > std::min(n, d))
    throw DomainError("pca_fit: n_components must lie in [1, min(n_rows, dim)]");

  PcaModel m;
  m.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - m.mean;
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Matrix& v = svd.matrixV();

  const double dof = static_cast<double>(n - 1);
  m.components = v.leftCols(n_components).transpose();
  m.explained_variance = s.head(n_components).array().square() / dof;
  m.total_variance = centered.squaredNorm() / dof;

  for (Eigen::Index i = 0; i < m.components.rows(); ++i) {
    Eigen::Index arg = 0;
    m.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (m.components(i, arg) < 0.0) m.components.row(i) *= -1.0;
  }
  return m;
}

Matrix pca_transform(const PcaModel& m, const Matrix& x) {
  if (x.cols() != m.dim()) throw DomainError("pca_transform: column count does not match the model");
  return (x.rowwise() - m.mean) * m.components.transpose();
}

}  // namespace rflow::learn
