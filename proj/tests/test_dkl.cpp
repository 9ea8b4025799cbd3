#include <chrono>
#include <cmath>
#include <numbers>

#include "doctest.h"

#include "dtr/dkl.hpp"
#include "dtr/error.hpp"
#include "dtr/panel.hpp"
#include "dtr/rng.hpp"
#include "dtr/sim.hpp"

using namespace dtr;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index n, Eigen::Index p, Rng& rng) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.uniform();
  return x;
}

double rbf(double ls, double os, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double d2 = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) d2 += (a(k) - b(k)) * (a(k) - b(k));
  return os * std::exp(-d2 / (2.0 * ls * ls));
}

Eigen::MatrixXd brute_kernel(double ls, double os, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = rbf(ls, os, a.row(i), b.row(j));
  return k;
}

// Small extractor so the finite-difference sweep stays cheap.
struct Problem {
  DenseNet net{std::vector<int>{3, 6, 4, 2}};
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd theta;

  explicit Problem(int n, std::uint64_t seed) {
    Rng rng(seed);
    x = uniform_matrix(n, 3, rng);
    y.resize(n);
    for (int i = 0; i < n; ++i) y(i) = std::sin(3.0 * x(i, 0)) + x(i, 1) + 0.1 * rng.normal();
    theta.resize(net.parameter_count() + 4);
    theta.head(net.parameter_count()) = net.initialize(rng);
    const Eigen::Index np = net.parameter_count();
    theta(np) = std::log(0.7);
    theta(np + 1) = std::log(1.3);
    theta(np + 2) = std::log(0.2);
    theta(np + 3) = 0.4;
  }
};

}  // namespace

TEST_CASE("kernel matrix") {
  Rng rng(1);
  const Eigen::MatrixXd a = uniform_matrix(5, 3, rng);
  const RbfKernel k{std::log(0.8), std::log(2.0)};
  const Eigen::MatrixXd km = kernel_matrix(k, a, a);
  CHECK((km - brute_kernel(0.8, 2.0, a, a)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((km - km.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 5; ++i) CHECK(km(i, i) == doctest::Approx(2.0).epsilon(1e-15));
  const RbfKernel flat{std::log(1e8), std::log(2.0)};
  CHECK((kernel_matrix(flat, a, a).array() - 2.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("log marginal likelihood: single point closed form") {
  const DenseNet net({1, 3, 2});
  Rng rng(2);
  Eigen::VectorXd theta(net.parameter_count() + 4);
  theta.head(net.parameter_count()) = net.initialize(rng);
  const Eigen::Index np = net.parameter_count();
  theta(np) = 0.0;
  theta(np + 1) = 0.0;  // outputscale 1
  theta(np + 2) = 0.0;  // noise 1
  theta(np + 3) = 0.25;
  const DklObjective obj(net, Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Constant(1, 0.25));
  CHECK(obj.value(theta) == doctest::Approx(-0.5 * (std::log(2.0) + std::log(2.0 * std::numbers::pi))).epsilon(1e-14));
}

TEST_CASE("log marginal likelihood matches a dense-inverse evaluation") {
  Problem pr(6, 3);
  const DklObjective obj(pr.net, pr.x, pr.y);
  Eigen::MatrixXd s;
  Eigen::RowVectorXd lo, range;
  obj.features(pr.theta, s, lo, range);
  CHECK(s.minCoeff() >= 0.0);
  CHECK(s.maxCoeff() <= 1.0);
  const Eigen::Index np = pr.net.parameter_count();
  const double ls = std::exp(pr.theta(np)), os = std::exp(pr.theta(np + 1)), noise = std::exp(pr.theta(np + 2));
  const Eigen::MatrixXd c = brute_kernel(ls, os, s, s) + noise * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
  const Eigen::VectorXd r = pr.y.array() - pr.theta(np + 3);
  const double dense = -0.5 * (r.dot(lu.inverse() * r) + std::log(lu.determinant()) + 6 * std::log(2 * std::numbers::pi));
  CHECK(std::abs(obj.value(pr.theta) - dense) < 1e-10);
}

TEST_CASE("log marginal likelihood gradient matches finite differences") {
  Problem pr(10, 4);
  const DklObjective obj(pr.net, pr.x, pr.y);
  Eigen::VectorXd g;
  obj.value(pr.theta, &g);
  const Eigen::Index np = pr.net.parameter_count();
  auto rel = [&](Eigen::Index i) {
    const double h = 1e-4;
    Eigen::VectorXd tp = pr.theta, tm = pr.theta;
    tp(i) += h;
    tm(i) -= h;
    const double fd = (obj.value(tp) - obj.value(tm)) / (2 * h);
    return std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-6});
  };
  double extractor = 0.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    if (std::abs(g(i)) < 1e-8) continue;  // dead ReLU units
    extractor = std::max(extractor, rel(i));
  }
  CHECK(extractor < 1e-4);
  CHECK(rel(np) < 1e-4);
  CHECK(rel(np + 1) < 1e-4);
  CHECK(rel(np + 2) < 1e-4);
  CHECK(rel(np + 3) < 1e-4);
}

TEST_CASE("posterior matches a dense evaluation") {
  Rng rng(5);
  const Eigen::MatrixXd s = uniform_matrix(4, 2, rng), t = uniform_matrix(3, 2, rng);
  Eigen::VectorXd y(4);
  y << 0.3, -1.2, 0.8, 2.0;
  const RbfKernel k{std::log(0.6), std::log(1.7)};
  const double noise = 0.15, mean = 0.2;
  const GpPosterior post = gp_predict(k, noise, mean, s, y, t);

  const Eigen::MatrixXd c = brute_kernel(0.6, 1.7, s, s) + noise * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd inv = c.fullPivLu().inverse();
  const Eigen::MatrixXd ks = brute_kernel(0.6, 1.7, t, s);
  const Eigen::VectorXd m = (ks * inv * (y.array() - mean).matrix()).array() + mean;
  const Eigen::VectorXd v = (brute_kernel(0.6, 1.7, t, t) - ks * inv * ks.transpose()).diagonal();
  CHECK((post.mean - m).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.raw_variance - v).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(post.raw_variance.minCoeff() >= -1e-8);
  CHECK(post.variance.minCoeff() >= 0.0);

  // Reordering test points permutes the output.
  Eigen::MatrixXd rev = t.colwise().reverse();
  const GpPosterior back = gp_predict(k, noise, mean, s, y, rev);
  for (int i = 0; i < 3; ++i) CHECK(back.mean(2 - i) == doctest::Approx(post.mean(i)).epsilon(1e-13));
}

TEST_CASE("noiseless interpolation and prior reversion") {
  Eigen::MatrixXd s(4, 2);
  s << 0, 0, 1, 0, 0, 1, 1, 1;
  Eigen::VectorXd y(4);
  y << 1.0, -0.5, 2.0, 0.25;
  const RbfKernel k{std::log(0.5), std::log(1.5)};
  const GpPosterior at = gp_predict(k, 1e-12, 0.3, s, y, s);
  CHECK((at.mean - y).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(at.variance.maxCoeff() < 1e-6);

  const Eigen::MatrixXd far = Eigen::MatrixXd::Constant(2, 2, 100.0);
  const GpPosterior away = gp_predict(k, 0.1, 0.3, s, y, far);
  CHECK((away.mean.array() - 0.3).abs().maxCoeff() < 1e-3);
  CHECK((away.variance.array() - 1.5).abs().maxCoeff() < 1e-3);
}

TEST_CASE("cholesky jitter escalation") {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 3);
  double jitter = -1.0;
  gp_cholesky(ones, 0.5, 1.0, &jitter);
  CHECK(jitter == 0.0);
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(3, 3);
  indefinite(0, 0) = -1.0;
  CHECK_THROWS_AS(gp_cholesky(indefinite, 0.0, 1.0), NumericalError);
}

TEST_CASE("fit: initialization, improvement, determinism") {
  SimSpec spec;
  spec.n_subjects = 250;
  spec.horizon = 11;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    const Panel p = simulate_panel(spec);
    const DesignMatrix d = history_features(p, 12);
    Eigen::VectorXd y(d.x.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = p[d.rows[static_cast<std::size_t>(i)]].at(12).y;
    DklConfig cfg;
    cfg.seed = seed;
    const DklModel m = fit_dkl(d.x, y, cfg);
    improved += m.log_marginal_likelihood() >= m.initial_log_marginal_likelihood();
    if (seed == 1) {
      const DklModel again = fit_dkl(d.x, y, cfg);
      CHECK(again.parameters() == m.parameters());
      CHECK(again.predict(d.x) == m.predict(d.x));

      DklConfig zero = cfg;
      zero.iters = 0;
      const DklModel z = fit_dkl(d.x, y, zero);
      const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
      CHECK(z.kernel().lengthscale() == doctest::Approx(1.0));
      CHECK(z.kernel().outputscale() == doctest::Approx(var));
      CHECK(z.noise() == doctest::Approx(0.1 * var));
      CHECK(z.mean_constant() == doctest::Approx(y.mean()));
      CHECK(z.log_marginal_likelihood() == z.initial_log_marginal_likelihood());
      const auto v = z.predict_variance(d.x);
      REQUIRE(v.has_value());
      CHECK(v->minCoeff() >= 0.0);
    }
  }
  CHECK(improved == 10);
}

TEST_CASE("fit: runtime budget at n=500, p=66") {
  SimSpec spec;
  spec.n_subjects = 1100;
  spec.seed = 3;
  const Panel p = simulate_panel(spec);
  DesignMatrix d = history_features(p, 12);
  const Eigen::Index n = std::min<Eigen::Index>(500, d.x.rows());
  const Eigen::MatrixXd x = d.x.topRows(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = p[d.rows[static_cast<std::size_t>(i)]].at(12).y;
  CHECK(n == 500);
  CHECK(x.cols() == 66);
  const auto t0 = std::chrono::steady_clock::now();
  const DklModel m = fit_dkl(x, y);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("fit_dkl n=500 p=66: " << secs << " s");
  CHECK(secs < 30.0);
  CHECK(m.predict(x).allFinite());
}

TEST_CASE("unfitted model and bad inputs") {
  const DklModel m;
  CHECK_THROWS_AS(m.predict(Eigen::MatrixXd::Zero(1, 2)), StateError);
  CHECK_THROWS_AS(fit_dkl(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1)), InvalidParameter);
  CHECK_THROWS_AS(fit_dkl(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)), InvalidParameter);
}
