#include <cmath>

#include "doctest.h"

#include "discrete_sem.hpp"
#include "dtr/error.hpp"
#include "dtr/estimators.hpp"
#include "dtr/sim.hpp"

using namespace dtr;

namespace {

Panel simulated(int n, int K, std::uint64_t seed) {
  SimSpec spec;
  spec.n_subjects = n;
  spec.horizon = K;
  spec.seed = seed;
  return simulate_panel(spec);
}

// Mean of Y_{K+1} over subjects who follow the regime through K and are
// uncensored at K + 1.
double follower_mean(const Panel& p, const Regime& r) {
  const int K = p.horizon();
  double s = 0;
  int n = 0;
  for (const auto& t : p.subjects()) {
    if (!follows_regime(t, r, K)) continue;
    s += t.at(K + 1).y;
    ++n;
  }
  return s / n;
}

}  // namespace

TEST_CASE("method names") {
  for (const Method m : {Method::iptw, Method::msm, Method::seq_g, Method::ltmle, Method::ts})
    CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_AS(parse_method("bogus"), InvalidParameter);
  CHECK_FALSE(method_uses_learner(Method::iptw));
  CHECK(method_uses_learner(Method::ts));
}

TEST_CASE("saturated nodewise sequential g equals the enumerated g-formula") {
  const Panel p = discrete::simulate(2000, 99);
  validate_panel(p);
  for (const RegimeKind k :
       {RegimeKind::threshold_750, RegimeKind::always_treat, RegimeKind::never_treat}) {
    EstimatorConfig cfg;
    cfg.method = Method::seq_g;
    cfg.learner = LearnerKind::saturated;
    cfg.scheme = IceScheme::nodewise;
    cfg.regime = Regime(k);
    const Estimate e = estimate_seq_g(p, cfg);
    CHECK(std::abs(e.value - discrete::g_formula(p, cfg.regime)) < 1e-8);
  }
}

TEST_CASE("iptw with unit propensities is the follower mean") {
  const Panel p = simulated(800, 3, 4);
  for (const RegimeKind k : {RegimeKind::threshold_750, RegimeKind::threshold_350, RegimeKind::never_treat}) {
    EstimatorConfig cfg;
    cfg.method = Method::iptw;
    cfg.regime = Regime(k);
    cfg.propensities = PropensitySource::unit;
    const Estimate e = estimate_iptw(p, cfg);
    CHECK(e.value == doctest::Approx(follower_mean(p, cfg.regime)).epsilon(1e-12));
  }
}

TEST_CASE("iptw on an all-follower panel without censoring") {
  std::vector<Trajectory> subjects = discrete::simulate(300, 5).subjects();
  double s = 0;
  for (auto& t : subjects) {
    t.records[0].t = 1;
    t.records[1].t = 1;
    s += t.records[2].y;
  }
  const Panel p(1, subjects);
  EstimatorConfig cfg;
  cfg.method = Method::iptw;
  cfg.regime = Regime(RegimeKind::always_treat);
  cfg.propensities = PropensitySource::unit;
  CHECK(estimate_iptw(p, cfg).value == doctest::Approx(s / 300).epsilon(1e-12));
  cfg.horvitz_thompson = true;
  CHECK(estimate_iptw(p, cfg).value == doctest::Approx(s / 300).epsilon(1e-12));
}

TEST_CASE("ltmle without fluctuation reduces to scaled sequential g") {
  for (std::uint64_t seed : {1, 2}) {
    const Panel p = simulated(600, 3, seed);
    EstimatorConfig cfg;
    cfg.learner = LearnerKind::L1;
    cfg.zero_fluctuation = true;
    const Estimate l = estimate_ltmle(p, cfg);
    EstimatorConfig g = cfg;
    g.scaled_outcome = true;
    const Estimate s = estimate_seq_g(p, g);
    REQUIRE(l.diagnostics.scaled_value.has_value());
    REQUIRE(s.diagnostics.scaled_value.has_value());
    CHECK(std::abs(*l.diagnostics.scaled_value - *s.diagnostics.scaled_value) < 1e-10);
    CHECK(std::abs(l.value - s.value) < 1e-9);
    for (const auto& st : l.diagnostics.steps) CHECK(st.epsilon == 0.0);
  }
}

TEST_CASE("ltmle fluctuation is small and finite") {
  const Panel p = simulated(600, 3, 7);
  EstimatorConfig cfg;
  cfg.learner = LearnerKind::L1;
  const Estimate e = estimate_ltmle(p, cfg);
  CHECK(std::isfinite(e.value));
  CHECK(e.value >= -5);
  CHECK(e.value <= 5);
  CHECK(e.diagnostics.steps.size() == 4);
  for (const auto& st : e.diagnostics.steps) CHECK(std::abs(st.epsilon) < 1.0);
}

TEST_CASE("two-step with unit propensities reduces to current-plug-in sequential g") {
  for (std::uint64_t seed : {3, 4}) {
    const Panel p = simulated(600, 3, seed);
    EstimatorConfig cfg;
    cfg.learner = LearnerKind::L1;
    cfg.propensities = PropensitySource::unit;
    const Estimate t = estimate_ts(p, cfg);
    EstimatorConfig g = cfg;
    g.plug_in = PlugIn::current;
    const Estimate s = estimate_seq_g(p, g);
    CHECK(std::abs(t.value - s.value) < 1e-10);
  }
}

TEST_CASE("msm pools regimes and rejects a constant treatment count") {
  const Panel p = simulated(1000, 3, 8);
  const std::vector<Regime> all{Regime(RegimeKind::threshold_750), Regime(RegimeKind::threshold_350),
                                Regime(RegimeKind::always_treat), Regime(RegimeKind::never_treat)};
  EstimatorConfig cfg;
  cfg.method = Method::msm;
  const auto est = estimate_msm(p, all, cfg);
  REQUIRE(est.size() == 4);
  const double t0 = *est[0].diagnostics.msm_theta0, t1 = *est[0].diagnostics.msm_theta1;
  // Static regimes sit exactly on the fitted line.
  CHECK(est[2].value == doctest::Approx(t0 + 4 * t1).epsilon(1e-12));
  CHECK(est[3].value == doctest::Approx(t0).epsilon(1e-12));
  CHECK(est[0].value >= std::min(est[2].value, est[3].value) - 1e-12);
  CHECK(est[0].value <= std::max(est[2].value, est[3].value) + 1e-12);

  CHECK_THROWS_AS(estimate_msm(p, {Regime(RegimeKind::always_treat)}, cfg), EstimationError);
  CHECK_THROWS_AS(estimate_msm(p, {}, cfg), InvalidParameter);
  cfg.regime = Regime(RegimeKind::threshold_350);
  CHECK(estimate(p, cfg).value == doctest::Approx(est[1].value).epsilon(1e-12));
}

TEST_CASE("estimates are deterministic") {
  const Panel p = simulated(400, 2, 9);
  for (const auto& [m, l] : {std::pair{Method::seq_g, LearnerKind::L2}, std::pair{Method::ltmle, LearnerKind::L2},
                            std::pair{Method::ts, LearnerKind::nn}, std::pair{Method::iptw, LearnerKind::L1}}) {
    EstimatorConfig cfg;
    cfg.method = m;
    cfg.learner = l;
    cfg.seed = 17;
    CHECK(estimate(p, cfg).value == estimate(p, cfg).value);
  }
}

TEST_CASE("diagnostics") {
  const Panel p = simulated(500, 2, 10);
  EstimatorConfig cfg;
  cfg.method = Method::ts;
  cfg.learner = LearnerKind::L1;
  const Estimate e = estimate(p, cfg);
  REQUIRE(e.diagnostics.steps.size() == 3);
  CHECK(e.diagnostics.steps[0].m == 2);
  CHECK(e.diagnostics.steps[2].m == 0);
  CHECK(e.diagnostics.steps[2].predict_rows == 500);
  CHECK(e.horizon == 2);
  CHECK(e.learner == "L1");

  cfg.method = Method::iptw;
  const Estimate w = estimate(p, cfg);
  CHECK(w.learner.empty());
  std::size_t fol = 0;
  for (const auto& s : p.subjects()) fol += follows_regime(s, cfg.regime, 2);
  CHECK(w.diagnostics.followers == fol);
}

TEST_CASE("errors") {
  const Panel p = simulated(50, 1, 11);
  std::vector<Trajectory> subjects = p.subjects();
  for (auto& s : subjects) s.records[0].t = 1;
  for (auto& s : subjects)
    if (s.uncensored_at(1)) s.records[1].t = 1;
  const Panel treated(1, subjects);
  EstimatorConfig cfg;
  cfg.method = Method::iptw;
  cfg.regime = Regime(RegimeKind::never_treat);
  CHECK_THROWS_AS(estimate(treated, cfg), EstimationError);

  EstimatorConfig sat;
  sat.learner = LearnerKind::saturated;
  CHECK_THROWS_AS(estimate_seq_g(p, sat), EstimationError);  // continuous histories
}
