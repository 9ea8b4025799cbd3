#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dtr/regressor.hpp"

namespace dtr {

// Linear model with intercept. Columns that are (numerically) linear
// combinations of earlier columns are dropped; their coefficient is 0.
struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // one per input column
  std::vector<bool> kept;        // per input column

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  int rank() const;
};

// Minimizes sum_i w_i (y_i - b0 - x_i' b)^2.
LinearModel fit_wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w);
LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

class LinearRegressor final : public Regressor {
 public:
  explicit LinearRegressor(LinearModel model) : model_(std::move(model)) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override { return model_.predict(x); }
  std::string kind() const override { return "linear"; }
  const LinearModel& model() const { return model_; }

 private:
  LinearModel model_;
};

}  // namespace dtr
