#include <cmath>
#include <random>

#include "doctest.h"

#include "dtr/error.hpp"
#include "dtr/rng.hpp"
#include "dtr/sim.hpp"

using namespace dtr;

namespace {

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Closed-form mean of the truncate-and-replace draw.
double replacement_mean(double mu, double s, const Replacement& r) {
  const double za = (r.a - mu) / s, zb = (r.b - mu) / s;
  const double inside = mu * (Phi(zb) - Phi(za)) + s * (phi(za) - phi(zb));
  return inside + Phi(za) * 0.5 * (r.a1 + r.a2) + (1.0 - Phi(zb)) * 0.5 * (r.b1 + r.b2);
}

// Independent sampler of Y_1 under T_0 = 0 with censoring prevented, written
// straight from the structural equations.
struct OneStep {
  std::mt19937_64 g{424242};
  std::normal_distribution<double> z{0.0, 1.0};
  std::uniform_real_distribution<double> u{0.0, 1.0};

  double tn(double mu, double s, double a, double b, double a1, double a2, double b1, double b2) {
    const double x = mu + s * z(g);
    if (x < a) return a1 + (a2 - a1) * u(g);
    if (x > b) return b1 + (b2 - b1) * u(g);
    return x;
  }
  double l1(double mu, double s) { return tn(mu, s, 0, 10000, 0, 50, 5000, 10000); }
  double l2(double mu, double s) { return tn(mu, s, 0.06, 0.8, 0.03, 0.09, 0.7, 0.8); }
  double l3(double mu, double s) { return tn(mu, s, -5, 5, -10, 3, 3, 10); }

  double draw() {
    const int v1 = u(g) < 4392.0 / 5826.0;
    const double v3 = 1.0 + 4.0 * u(g);
    (void)(u(g) < (v1 ? 2222.0 / 4392.0 : 758.0 / 1434.0));  // V2 does not enter Y_1
    const double a1 = v1 ? l1(650, 350) : l1(720, 400);
    const double lt1 = (a1 - 671.7468) / (10 * 352.2788) + 1;
    const double a2 = l2(0.16 + 0.05 * (a1 - 650) / 650, 0.07);
    const double lt2 = (a2 - 0.1648594) / (10 * 0.06980332) + 1;
    const double a3 = l3((v1 ? -1.65 : -2.05) + 0.1 * v3 + 0.05 * (a1 - 650) / 650 + 0.05 * (a2 - 16) / 16, 1);
    const double y0 = l3(-2.6 + 0.1 * (v3 > 2) + 0.3 * (v1 == 0) + (a3 + 1.45), 1.1);
    const double b1 = l1(13 * std::log(1.0 * (1034 - 662) / 8) + a1 + 2 * a2 + 2 * a3, 50);
    const double b2 = l2(a2 + 0.0003 * (b1 - a1) + 0.0005 * a3, 0.02);
    const double b3 = l3(a3 + 0.0017 * (b1 - a1) + 0.2 * (b2 - a2), 0.5);
    const double d1 = b1 - a1, d2 = b2 - a2, d3 = (b3 - a3) * (a3 + 1.5135);
    const double mu = y0 + 0.00005 * d1 - 0.000001 * std::pow(d1 * std::sqrt(lt1), 2) + 0.01 * d2 -
                      0.0001 * std::pow(d2 * std::sqrt(lt2), 2) + 0.07 * d3 - 0.001 * d3 * d3;
    return l3(mu, 2.5);
  }
};

Trajectory constant_trajectory(int K, int t) {
  Trajectory s;
  s.records.resize(static_cast<std::size_t>(K + 2));
  for (auto& r : s.records) {
    r.l1 = 500;
    r.l2 = 0.3;
    r.l3 = 0;
    r.c = 0;
    r.y = 0;
    r.t = static_cast<std::int8_t>(t);
  }
  return s;
}

}  // namespace

TEST_CASE("truncated draw: degenerate and replacement branches") {
  Rng rng(1);
  const Replacement y{-5, 5, -10, 3, 3, 10};
  CHECK(draw_truncated_normal(0.0, 0.0, y, rng) == 0.0);
  const Replacement l1{0, 10000, 0, 50, 5000, 10000};
  for (int i = 0; i < 100; ++i) {
    const double x = draw_truncated_normal(12000.0, 0.0, l1, rng);
    CHECK(x >= 5000.0);
    CHECK(x <= 10000.0);
  }
  CHECK_THROWS_AS(draw_truncated_normal(0.0, -1.0, y, rng), InvalidParameter);
}

TEST_CASE("truncated draw mean matches closed form") {
  const Replacement l1{0, 10000, 0, 50, 5000, 10000};
  Rng rng(7);
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw_truncated_normal(650, 350, l1, rng);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - replacement_mean(650, 350, l1)) < 3 * se);
}

TEST_CASE("regime decisions") {
  const Regime r750(RegimeKind::threshold_750), r350(RegimeKind::threshold_350);
  CHECK(r750.decide(400, 0.30, 0, 0) == 1);
  CHECK(r350.decide(400, 0.30, 0, 0) == 0);
  CHECK(r350.decide(900, 0.30, 0, 1) == 1);
  // Thresholds are strict.
  CHECK(r750.decide(750, 0.25, -2, 0) == 0);
  CHECK(r350.decide(350, 0.15, -2, 0) == 0);
  CHECK(r350.decide(1000, 0.14, 0, 0) == 1);
  CHECK(r350.decide(1000, 0.5, -2.01, 0) == 1);
  CHECK(Regime(RegimeKind::always_treat).decide(2000, 0.5, 1, 0) == 1);
  CHECK(Regime(RegimeKind::never_treat).decide(10, 0.01, -4, 1) == 0);
  CHECK(Regime::parse("350s") == r350);
  CHECK_THROWS_AS(Regime::parse("sometimes"), InvalidParameter);
}

TEST_CASE("follows_regime on hand-built trajectories") {
  const Regime always(RegimeKind::always_treat);
  CHECK(follows_regime(constant_trajectory(3, 1), always, 3));
  Trajectory s = constant_trajectory(3, 1);
  s.records[0].t = 0;
  CHECK_FALSE(follows_regime(s, always, 3));
  Trajectory c = constant_trajectory(3, 1);
  c.records[4] = TimeRecord{};
  c.records[4].c = 1;
  CHECK_FALSE(follows_regime(c, always, 3));
  CHECK(follows_regime(c, always, 2));

  Trajectory missing = constant_trajectory(2, 0);
  missing.records[1].l1 = kMissing;
  CHECK_THROWS_AS(regime_decision(Regime(RegimeKind::threshold_750), missing, 1, 0), DataIntegrityError);
}

TEST_CASE("simulated panel structure") {
  SimSpec spec;
  spec.seed = 31;
  const Panel p = simulate_panel(spec);
  REQUIRE(p.size() == 1000);
  validate_panel(p);
  std::size_t prev = p.size();
  for (int k = 0; k <= spec.horizon + 1; ++k) {
    const std::size_t n = at_risk(p, k).size();
    CHECK(n <= prev);
    prev = n;
  }
  for (const auto& s : p.subjects()) {
    CHECK(s.at(0).c == 0);
    for (int k = 0; k <= spec.horizon + 1; ++k) {
      const TimeRecord& r = s.at(k);
      if (k > 0 && s.at(k - 1).c == 1) CHECK(r.c == 1);
      if (r.c == 1) {
        CHECK(is_missing(r.y));
        CHECK(r.t == kMissingFlag);
        continue;
      }
      CHECK(r.l1 >= 0);
      CHECK(r.l1 <= 10000);
      CHECK(r.l2 >= 0.03);
      CHECK(r.l2 <= 0.8);
      CHECK(std::abs(r.l3) <= 10);
      CHECK(std::abs(r.y) <= 10);
      if (k > 0 && k <= spec.horizon) CHECK(r.t >= s.at(k - 1).t);
    }
  }
  const std::size_t tp1 = at_risk(p, 1).size();
  CHECK(tp1 >= 840);
  CHECK(tp1 <= 925);
  std::size_t fol = 0;
  for (const auto& s : p.subjects()) fol += follows_regime(s, Regime(RegimeKind::threshold_750), 11);
  CHECK(fol >= 210);
  CHECK(fol <= 262);
}

TEST_CASE("simulation is deterministic and seed-sensitive") {
  SimSpec a;
  a.n_subjects = 200;
  a.horizon = 4;
  a.seed = 5;
  CHECK(simulate_panel(a) == simulate_panel(a));
  SimSpec b = a;
  b.seed = 6;
  CHECK_FALSE(simulate_panel(a) == simulate_panel(b));
  SimSpec bad = a;
  bad.n_subjects = 0;
  CHECK_THROWS_AS(simulate_panel(bad), InvalidParameter);
}

TEST_CASE("never-treat truth at K=0 matches an independent one-step sampler") {
  SimSpec spec;
  spec.horizon = 0;
  spec.seed = 11;
  const GroundTruth t = counterfactual_truth(spec, Regime(RegimeKind::never_treat), 400000);
  OneStep oracle;
  const int n = 400000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double y = oracle.draw();
    s += y;
    s2 += y * y;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(t.mc_standard_error > 0);
  CHECK(std::abs(t.value - mean) < 3 * std::hypot(se, t.mc_standard_error));
}

TEST_CASE("truths: reproducible across seeds and regime-dependent") {
  SimSpec a;
  a.horizon = 11;
  a.seed = 1;
  SimSpec b = a;
  b.seed = 2;
  const Regime r(RegimeKind::threshold_750);
  const GroundTruth ta = counterfactual_truth(a, r, 1000000);
  const GroundTruth tb = counterfactual_truth(b, r, 1000000);
  CHECK(std::abs(ta.value - tb.value) < 3 * std::hypot(ta.mc_standard_error, tb.mc_standard_error));
  CHECK(ta.value >= -5);
  CHECK(ta.value <= 5);

  const GroundTruth on = counterfactual_truth(a, Regime(RegimeKind::always_treat), 200000);
  const GroundTruth off = counterfactual_truth(a, Regime(RegimeKind::never_treat), 200000);
  CHECK(std::abs(on.value - off.value) > 5 * std::hypot(on.mc_standard_error, off.mc_standard_error));

  const auto all = counterfactual_truths(a, r, 100000);
  REQUIRE(all.size() == 12);
  CHECK(all[11].value == doctest::Approx(counterfactual_truth(a, r, 100000).value).epsilon(1e-12));
}
