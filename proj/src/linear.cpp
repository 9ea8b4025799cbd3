#include "dtr/linear.hpp"

#include <cmath>

#include "dtr/error.hpp"

namespace dtr {

namespace {

// Relative residual norm below which a column counts as collinear.
constexpr double kCollinearTol = 1e-9;

}  // namespace

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coefficients.size())
    throw InvalidParameter("LinearModel::predict: expected " +
                           std::to_string(coefficients.size()) + " columns, got " +
                           std::to_string(x.cols()));
  Eigen::VectorXd out = x * coefficients;
  out.array() += intercept;
  return out;
}

int LinearModel::rank() const {
  int r = 1;
  for (bool k : kept) r += k ? 1 : 0;
  return r;
}

LinearModel fit_wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || w.size() != n) throw InvalidParameter("fit_wls: dimension mismatch");
  if ((w.array() < 0.0).any()) throw InvalidParameter("fit_wls: negative weight");
  if (!(w.sum() > 0.0)) throw InvalidParameter("fit_wls: all weights are zero");

  const Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd a(n, p + 1);
  a.col(0) = sw;
  for (Eigen::Index j = 0; j < p; ++j) a.col(j + 1) = x.col(j).cwiseProduct(sw);

  // Greedy Gram-Schmidt pass in column order: a column is kept when its
  // component orthogonal to the kept ones is not negligible. This drops the
  // later member of any collinear group.
  std::vector<Eigen::Index> keep{0};
  Eigen::MatrixXd basis(n, p + 1);
  basis.col(0) = a.col(0) / a.col(0).norm();
  Eigen::Index nb = 1;
  for (Eigen::Index j = 1; j <= p; ++j) {
    const double norm0 = a.col(j).norm();
    if (norm0 == 0.0) continue;
    Eigen::VectorXd v = a.col(j);
    for (int pass = 0; pass < 2; ++pass) v -= basis.leftCols(nb) * (basis.leftCols(nb).transpose() * v);
    const double rn = v.norm();
    if (rn > kCollinearTol * norm0) {
      basis.col(nb++) = v / rn;
      keep.push_back(j);
    }
  }

  Eigen::MatrixXd ak(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) ak.col(static_cast<Eigen::Index>(c)) = a.col(keep[c]);
  const Eigen::VectorXd beta = ak.householderQr().solve(y.cwiseProduct(sw));

  LinearModel m;
  m.coefficients = Eigen::VectorXd::Zero(p);
  m.kept.assign(static_cast<std::size_t>(p), false);
  m.intercept = beta(0);
  for (std::size_t c = 1; c < keep.size(); ++c) {
    m.coefficients(keep[c] - 1) = beta(static_cast<Eigen::Index>(c));
    m.kept[static_cast<std::size_t>(keep[c] - 1)] = true;
  }
  if (!m.coefficients.allFinite() || !std::isfinite(m.intercept))
    throw NumericalError("fit_wls: non-finite coefficients");
  return m;
}

LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return fit_wls(x, y, Eigen::VectorXd::Ones(x.rows()));
}

}  // namespace dtr
