#include "dtr/logistic.hpp"

#include <algorithm>
#include <cmath>

#include "dtr/error.hpp"

namespace dtr {

namespace {

constexpr double kEtaCap = 35.0;

// Penalized negative log-likelihood (quasi-binomial deviance / 2).
double objective(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                 const Eigen::VectorXd& beta, double ridge) {
  double f = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (w(i) == 0.0) continue;
    // log(1 + e^eta) - y * eta, computed stably.
    const double e = eta(i);
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    f += w(i) * (softplus - y(i) * e);
  }
  return f + 0.5 * ridge * beta.squaredNorm();
}

struct IrlsResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool converged = false;
};

IrlsResult irls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& off, double ridge, const LogisticOptions& opts) {
  const Eigen::Index q = a.cols();
  IrlsResult r;
  r.beta = Eigen::VectorXd::Zero(q);
  if (q == 0) {
    r.converged = true;
    return r;
  }
  Eigen::VectorXd eta = off;
  double f = objective(eta, y, w, r.beta, ridge);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    r.iterations = it;
    Eigen::VectorXd mu(eta.size()), v(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = expit(eta(i));
      v(i) = mu(i) * (1.0 - mu(i));
    }
    const Eigen::VectorXd wv = w.cwiseProduct(v);
    // Newton step on the penalized objective:
    // (A'WA + ridge I) delta = A'(w (y - mu)) - ridge * beta
    Eigen::MatrixXd h = a.transpose() * wv.asDiagonal() * a;
    h.diagonal().array() += ridge;
    const Eigen::VectorXd g = a.transpose() * w.cwiseProduct(y - mu) - ridge * r.beta;

    Eigen::VectorXd delta;
    double jitter = 0.0;
    const double scale = std::max(h.diagonal().maxCoeff(), 1e-300);
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd hj = h;
      hj.diagonal().array() += jitter;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hj);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
          (ldlt.vectorD().array() > 1e-13 * scale).all()) {
        delta = ldlt.solve(g);
        if (delta.allFinite()) break;
      }
      delta.resize(0);
      jitter = jitter == 0.0 ? 1e-10 * scale : jitter * 10.0;
    }
    if (delta.size() == 0) throw NumericalError("fit_logistic: Hessian could not be stabilized");

    // Step halving keeps the objective non-increasing.
    double step = 1.0;
    Eigen::VectorXd beta_new, eta_new;
    double f_new = f;
    for (int half = 0; half < 30; ++half) {
      beta_new = r.beta + step * delta;
      eta_new = a * beta_new + off;
      f_new = objective(eta_new, y, w, beta_new, ridge);
      if (std::isfinite(f_new) && f_new <= f + 1e-12 * std::abs(f)) break;
      step *= 0.5;
    }
    const double change = (beta_new - r.beta).cwiseAbs().maxCoeff();
    r.beta = beta_new;
    eta = eta_new;
    f = f_new;
    if (change < opts.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Eigen::VectorXd LogisticModel::linear_predictor(const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd* offset) const {
  if (x.cols() != coefficients.size())
    throw InvalidParameter("LogisticModel: expected " + std::to_string(coefficients.size()) +
                           " columns, got " + std::to_string(x.cols()));
  Eigen::VectorXd eta = coefficients.size() > 0 ? Eigen::VectorXd(x * coefficients)
                                                 : Eigen::VectorXd::Zero(x.rows());
  if (has_intercept) eta.array() += intercept;
  if (offset) {
    if (offset->size() != x.rows()) throw InvalidParameter("LogisticModel: offset length mismatch");
    eta += *offset;
  }
  return eta;
}

Eigen::VectorXd LogisticModel::predict_probability(const Eigen::MatrixXd& x,
                                                   const Eigen::VectorXd* offset) const {
  Eigen::VectorXd eta = linear_predictor(x, offset);
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = expit(std::clamp(eta(i), -kEtaCap, kEtaCap));
  return eta;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const LogisticOptions& opts) {
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw InvalidParameter("fit_logistic: |y| != rows(X)");
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
    throw InvalidParameter("fit_logistic: responses must lie in [0, 1]");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (opts.sample_weight) {
    if (opts.sample_weight->size() != n) throw InvalidParameter("fit_logistic: weight length mismatch");
    if ((opts.sample_weight->array() < 0.0).any()) throw InvalidParameter("fit_logistic: negative weight");
    w = *opts.sample_weight;
  }
  Eigen::VectorXd off = Eigen::VectorXd::Zero(n);
  if (opts.offset) {
    if (opts.offset->size() != n) throw InvalidParameter("fit_logistic: offset length mismatch");
    off = *opts.offset;
  }

  const Eigen::Index lead = opts.intercept ? 1 : 0;
  Eigen::MatrixXd a(n, x.cols() + lead);
  if (opts.intercept) a.col(0).setOnes();
  a.rightCols(x.cols()) = x;

  IrlsResult r = irls(a, y, w, off, 0.0, opts);
  LogisticModel m;
  // Fitted probabilities saturating in double precision mean the maximizer
  // lies at infinity even if the gradient vanished numerically.
  const bool saturated = r.converged && ((a * r.beta + off).array().abs() > kEtaCap - 5.0 && w.array() > 0.0).any();
  if (!r.converged || saturated) {
    m.separated = true;
    const double ridge = 1e-6 * std::max(w.sum(), 1.0);
    r = irls(a, y, w, off, ridge, opts);
  }
  if (!r.beta.allFinite()) throw NumericalError("fit_logistic: non-finite coefficients");
  m.has_intercept = opts.intercept;
  m.intercept = opts.intercept ? r.beta(0) : 0.0;
  m.coefficients = r.beta.tail(x.cols());
  m.iterations = r.iterations;
  m.converged = r.converged;
  return m;
}

}  // namespace dtr
