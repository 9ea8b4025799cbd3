#include "dtr/mlp.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dtr/error.hpp"

namespace dtr {

void column_standardization(const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& scale) {
  const double n = static_cast<double>(x.rows());
  mean = x.colwise().mean();
  scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = n > 1 ? (x.col(j).array() - mean(j)).square().sum() / (n - 1) : 0.0;
    scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

Eigen::VectorXd MlpRegressor::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd xs = (x.rowwise() - x_mean_).array().rowwise() / x_scale_.array();
  Eigen::VectorXd out = net_.forward(params_, xs).col(0);
  return (out.array() * y_scale_ + y_mean_).matrix();
}

double mse_loss_and_gradient(const DenseNet& net, const Eigen::VectorXd& params,
                             const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             Eigen::VectorXd* grad, const Eigen::VectorXd* weight, double dropout,
                             Rng* rng) {
  DenseNet::Cache cache;
  const Eigen::MatrixXd out = net.forward(params, x, grad ? &cache : nullptr, dropout, rng);
  const Eigen::VectorXd r = out.col(0) - y;
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd w = weight ? *weight : Eigen::VectorXd::Ones(y.size());
  const double sw = w.sum();
  if (!(sw > 0.0)) throw InvalidParameter("mse_loss_and_gradient: weights sum to zero");
  // Weights are rescaled to average 1 within the batch.
  w *= n / sw;
  const double loss = w.dot(r.cwiseAbs2()) / n;
  if (grad) {
    Eigen::MatrixXd d_out = (2.0 / n) * w.cwiseProduct(r);
    *grad = net.backward(params, cache, d_out);
  }
  return loss;
}

MlpRegressor fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpParams& params,
                     const Eigen::VectorXd* sample_weight, std::string kind) {
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw InvalidParameter("fit_mlp: |y| != rows(X)");
  if (n == 0) throw InvalidParameter("fit_mlp: no rows");
  if (params.epochs < 0 || params.batch_size < 1 || params.lr <= 0.0)
    throw InvalidParameter("fit_mlp: invalid training schedule");
  if (sample_weight && sample_weight->size() != n) throw InvalidParameter("fit_mlp: weight length mismatch");

  std::vector<int> sizes{static_cast<int>(x.cols())};
  for (int h : params.hidden) sizes.push_back(h);
  sizes.push_back(1);
  DenseNet net(sizes);

  Eigen::RowVectorXd xm = Eigen::RowVectorXd::Zero(x.cols()), xs = Eigen::RowVectorXd::Ones(x.cols());
  double ym = 0.0, ys = 1.0;
  if (params.standardize) {
    column_standardization(x, xm, xs);
    ym = y.mean();
    const double var = n > 1 ? (y.array() - ym).square().sum() / static_cast<double>(n - 1) : 0.0;
    ys = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  const Eigen::MatrixXd xz = (x.rowwise() - xm).array().rowwise() / xs.array();
  const Eigen::VectorXd yz = (y.array() - ym) / ys;

  Rng rng(params.seed);
  Eigen::VectorXd theta = net.initialize(rng);
  Adam adam(theta.size(), params.lr);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index bs = std::min<Eigen::Index>(params.batch_size, n);
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb, wb, grad;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index m = std::min(bs, n - start);
      xb.resize(m, x.cols());
      yb.resize(m);
      wb.resize(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = xz.row(src);
        yb(r) = yz(src);
        wb(r) = sample_weight ? (*sample_weight)(src) : 1.0;
      }
      if (!(wb.sum() > 0.0)) continue;
      const double loss = mse_loss_and_gradient(net, theta, xb, yb, &grad, sample_weight ? &wb : nullptr,
                                                params.dropout, &rng);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "fit_mlp: non-finite loss at epoch " << epoch << ", batch start " << start
            << " (loss=" << loss << ", |theta|=" << theta.norm() << ")";
        throw NumericalError(msg.str());
      }
      adam.step(theta, grad);
    }
  }
  return MlpRegressor(std::move(net), std::move(theta), std::move(xm), std::move(xs), ym, ys, std::move(kind));
}

}  // namespace dtr
