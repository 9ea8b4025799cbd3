#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dtr/learner.hpp"
#include "dtr/panel.hpp"
#include "dtr/sim.hpp"
#include "dtr/weights.hpp"

namespace dtr {

enum class Method { iptw, msm, seq_g, ltmle, ts };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
bool method_uses_learner(Method m);

enum class PropensitySource { fitted, oracle, unit };

// How the regime enters the outcome-regression predictions.
enum class PlugIn {
  full,     // T_0..T_m replaced by the regime path d_0..d_m
  current,  // only T_m replaced, by the rule applied to the observed history
};

enum class IceScheme {
  // One regression per step on (V, L_0..L_{m+1}, Y_0..Y_m, T_0..T_m) over
  // C_{m+1} = 0, predicted with the regime plugged in over C_m = 0.
  single,
  // Two regressions per step: the one above evaluated at the observed
  // history, then a regression on (V, L_0..L_m, Y_0..Y_m, T_0..T_m) over
  // C_m = 0 predicted with the regime plugged in. Exactly the plug-in
  // g-formula under saturated regressions.
  nodewise,
};

struct EstimatorConfig {
  Method method = Method::seq_g;
  LearnerKind learner = LearnerKind::L1;
  Regime regime{RegimeKind::threshold_750};
  Truncation truncation{};
  // LTMLE outcome scaling: true bounds and clamp margin.
  double y_lo = -5.0;
  double y_hi = 5.0;
  double y_margin = 0.0005;
  std::uint64_t seed = 1;
  LearnerConfig learners{};

  PropensitySource propensities = PropensitySource::fitted;
  bool horvitz_thompson = false;       // iptw: unnormalized form
  IceScheme scheme = IceScheme::single;  // seq_g
  PlugIn plug_in = PlugIn::full;       // seq_g
  bool scaled_outcome = false;         // seq_g on the LTMLE [0, 1] path
  bool zero_fluctuation = false;       // ltmle: epsilon forced to 0
  bool ts_loss_weight = false;         // ts: weight as loss weight, not a covariate
};

struct StepDiagnostics {
  int m = 0;
  std::size_t fit_rows = 0;
  std::size_t predict_rows = 0;
  std::size_t followers = 0;
  std::string chosen;
  double mean_q = 0.0;  // mean of the step's (updated) predictions
  double epsilon = 0.0;
  bool fluctuation_skipped = false;
  // DKL only: mean predictive variance over the predicted rows and the
  // smallest variance before clamping.
  std::optional<double> mean_variance;
  std::optional<double> min_raw_variance;
};

struct Diagnostics {
  std::vector<StepDiagnostics> steps;  // m = K..0
  std::size_t followers = 0;           // regime followers at K (iptw/msm)
  std::size_t truncation_hits = 0;
  std::vector<int> separated_treatment_models;
  std::vector<int> separated_censoring_models;
  std::optional<double> scaled_value;  // ltmle / scaled seq_g, before back-transformation
  std::optional<double> msm_theta0, msm_theta1;
  std::vector<double> final_variances;  // ts-dkl: predictive variances at m = 0
};

struct Estimate {
  Method method = Method::seq_g;
  std::string learner;  // empty for iptw / msm
  Regime regime{RegimeKind::threshold_750};
  int horizon = 0;
  double value = 0.0;
  Diagnostics diagnostics;
};

// The panel's horizon is the K of the target E[Y_{K+1}^{d, c=0}]; use
// truncate_horizon for shorter targets.
Estimate estimate_iptw(const Panel& panel, const EstimatorConfig& config);
// One estimate per regime in `family`, from a single weighted regression on
// the pooled follower sets.
std::vector<Estimate> estimate_msm(const Panel& panel, const std::vector<Regime>& family,
                                   const EstimatorConfig& config);
Estimate estimate_seq_g(const Panel& panel, const EstimatorConfig& config);
Estimate estimate_ltmle(const Panel& panel, const EstimatorConfig& config);
Estimate estimate_ts(const Panel& panel, const EstimatorConfig& config);

// Dispatch on config.method (msm over config.regime alone is rank deficient;
// estimate() pools all four regimes and returns the configured one).
Estimate estimate(const Panel& panel, const EstimatorConfig& config);

}  // namespace dtr
