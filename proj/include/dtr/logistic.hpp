#pragma once

#include <Eigen/Dense>

namespace dtr {

struct LogisticOptions {
  const Eigen::VectorXd* sample_weight = nullptr;
  const Eigen::VectorXd* offset = nullptr;
  bool intercept = true;
  int max_iterations = 100;
  double tolerance = 1e-8;  // on max |coefficient change|
};

struct LogisticModel {
  bool has_intercept = true;
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  int iterations = 0;
  bool converged = false;
  // The unpenalized likelihood had no finite maximizer (or the fit ran into
  // the linear-predictor ceiling); the returned model is the ridge-stabilized
  // optimum.
  bool separated = false;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd* offset = nullptr) const;
  // Probabilities strictly inside (0, 1).
  Eigen::VectorXd predict_probability(const Eigen::MatrixXd& x,
                                      const Eigen::VectorXd* offset = nullptr) const;
};

// Maximizes the (weighted) Bernoulli log-likelihood by IRLS. Responses may be
// fractional in [0, 1] (quasi-binomial), which the targeting step relies on.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const LogisticOptions& opts = {});

double expit(double x);
double logit(double p);

}  // namespace dtr
