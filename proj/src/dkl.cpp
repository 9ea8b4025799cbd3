#include "dtr/dkl.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dtr/error.hpp"
#include "dtr/mlp.hpp"

namespace dtr {

double RbfKernel::lengthscale() const { return std::exp(log_lengthscale); }
double RbfKernel::outputscale() const { return std::exp(log_outputscale); }

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

Eigen::MatrixXd rbf_from_distances(const Eigen::MatrixXd& d2, double ls, double os) {
  return (os * (-d2.array() / (2.0 * ls * ls)).exp()).matrix();
}

// Gram matrix of a set with itself: exact zeros on the diagonal distances
// and exact symmetry.
Eigen::MatrixXd self_distances(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd d = squared_distances(s, s);
  d.diagonal().setZero();
  return (0.5 * (d + d.transpose())).eval();
}

GpPosterior posterior_from_factor(const RbfKernel& kernel, double mean, const Eigen::MatrixXd& s_train,
                                  const Eigen::MatrixXd& chol, const Eigen::VectorXd& alpha,
                                  const Eigen::MatrixXd& s_test) {
  const Eigen::MatrixXd ks = kernel_matrix(kernel, s_test, s_train);  // m x n
  GpPosterior out;
  out.mean = (ks * alpha).array() + mean;
  const Eigen::MatrixXd v = chol.triangularView<Eigen::Lower>().solve(ks.transpose());  // n x m
  out.raw_variance = (kernel.outputscale() - v.colwise().squaredNorm().array()).matrix().transpose();
  out.variance = out.raw_variance.cwiseMax(0.0);
  return out;
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const RbfKernel& kernel, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw InvalidParameter("kernel_matrix: feature dimensions differ");
  return rbf_from_distances(squared_distances(a, b), kernel.lengthscale(), kernel.outputscale());
}

Eigen::MatrixXd gp_cholesky(const Eigen::MatrixXd& gram, double noise, double outputscale, double* jitter_used) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += noise;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 4; ++attempt) {
    Eigen::MatrixXd aj = a;
    if (jitter > 0.0) aj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(aj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt.matrixL();
    }
    jitter = jitter == 0.0 ? 1e-6 * outputscale : jitter * 10.0;
  }
  std::ostringstream msg;
  msg << "gp_cholesky: factorization failed after 3 jitter escalations (n=" << gram.rows()
      << ", noise=" << noise << ", outputscale=" << outputscale << ", last jitter=" << jitter / 10.0
      << ", diag range=[" << a.diagonal().minCoeff() << ", " << a.diagonal().maxCoeff() << "])";
  throw NumericalError(msg.str());
}

GpPosterior gp_predict(const RbfKernel& kernel, double noise, double mean, const Eigen::MatrixXd& s_train,
                       const Eigen::VectorXd& y, const Eigen::MatrixXd& s_test) {
  if (s_train.rows() != y.size()) throw InvalidParameter("gp_predict: |y| != rows(train)");
  const Eigen::MatrixXd gram = rbf_from_distances(self_distances(s_train), kernel.lengthscale(), kernel.outputscale());
  const Eigen::MatrixXd chol = gp_cholesky(gram, noise, kernel.outputscale());
  const Eigen::VectorXd alpha =
      chol.transpose().triangularView<Eigen::Upper>().solve(chol.triangularView<Eigen::Lower>().solve(
          (y.array() - mean).matrix()));
  return posterior_from_factor(kernel, mean, s_train, chol, alpha, s_test);
}

DklObjective::DklObjective(DenseNet net, Eigen::MatrixXd x, Eigen::VectorXd y)
    : net_(std::move(net)), x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() != y_.size()) throw InvalidParameter("DklObjective: |y| != rows(X)");
  if (x_.rows() < 1) throw InvalidParameter("DklObjective: no rows");
}

void DklObjective::features(const Eigen::VectorXd& theta, Eigen::MatrixXd& s, Eigen::RowVectorXd& lo,
                            Eigen::RowVectorXd& range) const {
  const Eigen::MatrixXd z = net_.forward(theta.head(net_.parameter_count()), x_);
  lo = z.colwise().minCoeff();
  range = z.colwise().maxCoeff() - lo;
  for (Eigen::Index j = 0; j < range.size(); ++j)
    if (!(range(j) > 1e-12)) range(j) = 1.0;
  s = (z.rowwise() - lo).array().rowwise() / range.array();
}

double DklObjective::value(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
  const Eigen::Index np = net_.parameter_count();
  if (theta.size() != np + 4) throw InvalidParameter("DklObjective: parameter vector size mismatch");
  const double ls = std::exp(theta(np));
  const double os = std::exp(theta(np + 1));
  const double noise = std::exp(theta(np + 2));
  const double mean = theta(np + 3);
  const Eigen::Index n = x_.rows();

  DenseNet::Cache cache;
  const Eigen::VectorXd net_params = theta.head(np);
  const Eigen::MatrixXd z = net_.forward(net_params, x_, grad ? &cache : nullptr);
  const Eigen::Index q = z.cols();
  Eigen::RowVectorXd lo(q), range(q);
  std::vector<Eigen::Index> arg_lo(static_cast<std::size_t>(q)), arg_hi(static_cast<std::size_t>(q));
  std::vector<bool> degenerate(static_cast<std::size_t>(q));
  for (Eigen::Index j = 0; j < q; ++j) {
    Eigen::Index imin, imax;
    lo(j) = z.col(j).minCoeff(&imin);
    const double hi = z.col(j).maxCoeff(&imax);
    arg_lo[static_cast<std::size_t>(j)] = imin;
    arg_hi[static_cast<std::size_t>(j)] = imax;
    range(j) = hi - lo(j);
    degenerate[static_cast<std::size_t>(j)] = !(range(j) > 1e-12);
    if (degenerate[static_cast<std::size_t>(j)]) range(j) = 1.0;
  }
  const Eigen::MatrixXd s = (z.rowwise() - lo).array().rowwise() / range.array();

  const Eigen::MatrixXd d2 = self_distances(s);
  const Eigen::MatrixXd k = rbf_from_distances(d2, ls, os);
  const Eigen::MatrixXd chol = gp_cholesky(k, noise, os);
  const Eigen::VectorXd r = (y_.array() - mean).matrix();
  const auto lower = chol.triangularView<Eigen::Lower>();
  const Eigen::VectorXd alpha = chol.transpose().triangularView<Eigen::Upper>().solve(lower.solve(r));
  const double logdet = 2.0 * chol.diagonal().array().log().sum();
  const double lml =
      -0.5 * (r.dot(alpha) + logdet + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
  if (!grad) return lml;

  Eigen::MatrixXd a_inv = lower.solve(Eigen::MatrixXd::Identity(n, n));
  a_inv = (a_inv.transpose() * a_inv).eval();
  const Eigen::MatrixXd m = 0.5 * (alpha * alpha.transpose() - a_inv);
  const Eigen::MatrixXd p = m.cwiseProduct(k);

  grad->resize(theta.size());
  (*grad)(np) = p.cwiseProduct(d2).sum() / (ls * ls);
  (*grad)(np + 1) = p.sum();
  (*grad)(np + 2) = noise * m.trace();
  (*grad)(np + 3) = alpha.sum();

  // d lml / d s_i = -(2 / ls^2) sum_j P_ij (s_i - s_j)
  const Eigen::VectorXd prow = p.rowwise().sum();
  const Eigen::MatrixXd gs = -(2.0 / (ls * ls)) * (prow.asDiagonal() * s - p * s);

  // Back through the min-max scaler; lo and hi are the extreme rows.
  Eigen::MatrixXd gz = gs.array().rowwise() / range.array();
  for (Eigen::Index j = 0; j < q; ++j) {
    const std::size_t jj = static_cast<std::size_t>(j);
    if (degenerate[jj]) {
      gz(arg_lo[jj], j) -= gs.col(j).sum();
      continue;
    }
    gz(arg_lo[jj], j) += gs.col(j).dot((s.col(j).array() - 1.0).matrix()) / range(j);
    gz(arg_hi[jj], j) -= gs.col(j).dot(s.col(j)) / range(j);
  }
  grad->head(np) = net_.backward(net_params, cache, gz);
  return lml;
}

RbfKernel DklModel::kernel() const {
  const Eigen::Index np = net_.parameter_count();
  return RbfKernel{theta_(np), theta_(np + 1)};
}

double DklModel::noise() const { return std::exp(theta_(net_.parameter_count() + 2)); }
double DklModel::mean_constant() const { return theta_(net_.parameter_count() + 3); }

Eigen::MatrixXd DklModel::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != x_mean_.size())
    throw InvalidParameter("DklModel: expected " + std::to_string(x_mean_.size()) + " columns, got " +
                           std::to_string(x.cols()));
  const Eigen::MatrixXd xs = (x.rowwise() - x_mean_).array().rowwise() / x_scale_.array();
  const Eigen::MatrixXd z = net_.forward(theta_.head(net_.parameter_count()), xs);
  return (z.rowwise() - lo_).array().rowwise() / range_.array();
}

GpPosterior DklModel::predict_full(const Eigen::MatrixXd& x) const {
  if (!fitted_) throw StateError("DklModel: predict before fit");
  return posterior_from_factor(kernel(), mean_constant(), s_train_, chol_, alpha_, transform(x));
}

Eigen::VectorXd DklModel::predict(const Eigen::MatrixXd& x) const { return predict_full(x).mean; }

std::optional<Eigen::VectorXd> DklModel::predict_variance(const Eigen::MatrixXd& x) const {
  return predict_full(x).variance;
}

DklModel fit_dkl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const DklConfig& config) {
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw InvalidParameter("fit_dkl: |y| != rows(X)");
  if (n < 2) throw InvalidParameter("fit_dkl: need at least 2 rows");
  if (config.iters < 0 || config.lr <= 0.0 || config.output_dim < 1)
    throw InvalidParameter("fit_dkl: invalid configuration");

  DklModel model;
  column_standardization(x, model.x_mean_, model.x_scale_);
  const Eigen::MatrixXd xs = (x.rowwise() - model.x_mean_).array().rowwise() / model.x_scale_.array();

  std::vector<int> sizes{static_cast<int>(x.cols())};
  for (int h : config.hidden) sizes.push_back(h);
  sizes.push_back(config.output_dim);
  model.net_ = DenseNet(sizes);
  const Eigen::Index np = model.net_.parameter_count();

  Rng rng(config.seed);
  const double ym = y.mean();
  const double var = std::max((y.array() - ym).square().sum() / static_cast<double>(n - 1), 1e-8);
  Eigen::VectorXd theta(np + 4);
  theta.head(np) = model.net_.initialize(rng);
  theta(np) = 0.0;
  theta(np + 1) = std::log(var);
  theta(np + 2) = std::log(0.1 * var);
  theta(np + 3) = ym;

  const DklObjective objective(model.net_, xs, y);
  Adam adam(theta.size(), config.lr);
  Eigen::VectorXd grad;
  const double scale = 1.0 / static_cast<double>(n);
  for (int it = 0; it < config.iters; ++it) {
    const double v = objective.value(theta, &grad);
    if (it == 0) model.lml_init_ = v;
    if (!std::isfinite(v) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "fit_dkl: non-finite likelihood at step " << it << " (lml=" << v
          << ", log_lengthscale=" << theta(np) << ", log_outputscale=" << theta(np + 1)
          << ", log_noise=" << theta(np + 2) << ", mean=" << theta(np + 3)
          << ", |w|=" << theta.head(np).norm() << ")";
      throw NumericalError(msg.str());
    }
    Eigen::VectorXd descent = -scale * grad;
    adam.step(theta, descent);
  }

  model.theta_ = theta;
  objective.features(theta, model.s_train_, model.lo_, model.range_);
  const RbfKernel kern = model.kernel();
  const Eigen::MatrixXd gram =
      rbf_from_distances(self_distances(model.s_train_), kern.lengthscale(), kern.outputscale());
  model.chol_ = gp_cholesky(gram, model.noise(), kern.outputscale());
  const Eigen::VectorXd r = (y.array() - model.mean_constant()).matrix();
  model.alpha_ = model.chol_.transpose().triangularView<Eigen::Upper>().solve(
      model.chol_.triangularView<Eigen::Lower>().solve(r));
  model.lml_ = -0.5 * (r.dot(model.alpha_) + 2.0 * model.chol_.diagonal().array().log().sum() +
                       static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
  if (config.iters == 0) model.lml_init_ = model.lml_;
  if (!std::isfinite(model.lml_)) throw NumericalError("fit_dkl: non-finite final likelihood");
  model.y_ = y;
  model.fitted_ = true;
  return model;
}

}  // namespace dtr
