#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dtr/dense_net.hpp"
#include "dtr/regressor.hpp"

namespace dtr {

struct RbfKernel {
  double log_lengthscale = 0.0;
  double log_outputscale = 0.0;

  double lengthscale() const;
  double outputscale() const;
};

// K[i, j] = outputscale * exp(-|a_i - b_j|^2 / (2 lengthscale^2)).
Eigen::MatrixXd kernel_matrix(const RbfKernel& kernel, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct DklConfig {
  std::vector<int> hidden{1000, 500};
  int output_dim = 50;
  int iters = 5;
  double lr = 0.01;
  std::uint64_t seed = 1;
};

// Exact GP posterior given warped training features.
struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;      // clamped at 0
  Eigen::VectorXd raw_variance;  // before clamping
};

// Lower Cholesky factor of K + noise I. Jitter (1e-6 * outputscale, then x10,
// at most 3 escalations) is added only if the plain factorization fails.
Eigen::MatrixXd gp_cholesky(const Eigen::MatrixXd& gram, double noise, double outputscale,
                            double* jitter_used = nullptr);

GpPosterior gp_predict(const RbfKernel& kernel, double noise, double mean, const Eigen::MatrixXd& s_train,
                       const Eigen::VectorXd& y, const Eigen::MatrixXd& s_test);

// Log marginal likelihood of the deep-kernel GP as a function of the flat
// parameter vector [network..., log_lengthscale, log_outputscale, log_noise,
// mean]. Inputs are used as given (standardize beforehand); the network
// output is min-max scaled to [0, 1] per coordinate over these rows.
class DklObjective {
 public:
  DklObjective(DenseNet net, Eigen::MatrixXd x, Eigen::VectorXd y);

  Eigen::Index parameter_count() const { return net_.parameter_count() + 4; }
  const DenseNet& net() const { return net_; }

  double value(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const;

  // Warped, scaled training features and the scaler (lo, range) fit on them.
  void features(const Eigen::VectorXd& theta, Eigen::MatrixXd& s, Eigen::RowVectorXd& lo,
                Eigen::RowVectorXd& range) const;

 private:
  DenseNet net_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
};

class DklModel final : public Regressor {
 public:
  DklModel() = default;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
  std::optional<Eigen::VectorXd> predict_variance(const Eigen::MatrixXd& x) const override;
  GpPosterior predict_full(const Eigen::MatrixXd& x) const;
  std::string kind() const override { return "dkl"; }

  bool fitted() const { return fitted_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  RbfKernel kernel() const;
  double noise() const;
  double mean_constant() const;
  // At the fitted parameters on the training data, and at initialization.
  double log_marginal_likelihood() const { return lml_; }
  double initial_log_marginal_likelihood() const { return lml_init_; }

  friend DklModel fit_dkl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const DklConfig& config);

 private:
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;

  bool fitted_ = false;
  DenseNet net_;
  Eigen::VectorXd theta_;
  Eigen::RowVectorXd x_mean_, x_scale_;
  Eigen::RowVectorXd lo_, range_;
  Eigen::MatrixXd s_train_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  double lml_init_ = 0.0;
};

// Joint Adam ascent on the log marginal likelihood (scaled by 1/n) for
// exactly config.iters full-batch steps.
DklModel fit_dkl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const DklConfig& config = {});

}  // namespace dtr
