#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dtr/dense_net.hpp"
#include "dtr/regressor.hpp"

namespace dtr {

struct MlpParams {
  std::vector<int> hidden{128};
  int epochs = 50;
  double lr = 1e-3;
  double dropout = 0.0;  // drop probability of hidden units
  int batch_size = 32;
  std::uint64_t seed = 1;
  // Train on z-scored inputs and target; predictions are mapped back.
  bool standardize = true;
};

class MlpRegressor final : public Regressor {
 public:
  MlpRegressor(DenseNet net, Eigen::VectorXd params, Eigen::RowVectorXd x_mean,
               Eigen::RowVectorXd x_scale, double y_mean, double y_scale, std::string kind)
      : net_(std::move(net)), params_(std::move(params)), x_mean_(std::move(x_mean)),
        x_scale_(std::move(x_scale)), y_mean_(y_mean), y_scale_(y_scale), kind_(std::move(kind)) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
  std::string kind() const override { return kind_; }

  const DenseNet& net() const { return net_; }
  const Eigen::VectorXd& parameters() const { return params_; }

 private:
  DenseNet net_;
  Eigen::VectorXd params_;
  Eigen::RowVectorXd x_mean_, x_scale_;
  double y_mean_, y_scale_;
  std::string kind_;
};

// Mean squared error (optionally weighted, weights summing to the batch
// weight) of a single-output network, and its parameter gradient.
double mse_loss_and_gradient(const DenseNet& net, const Eigen::VectorXd& params,
                             const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             Eigen::VectorXd* grad, const Eigen::VectorXd* weight = nullptr,
                             double dropout = 0.0, Rng* rng = nullptr);

// Mini-batch Adam on squared error. `kind` tags the regressor ("mlp" / "nn").
MlpRegressor fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpParams& params = {},
                     const Eigen::VectorXd* sample_weight = nullptr, std::string kind = "mlp");

// Column means and scales (sd, or 1 for constant columns).
void column_standardization(const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& scale);

}  // namespace dtr
