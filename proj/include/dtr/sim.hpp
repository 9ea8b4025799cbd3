#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dtr/panel.hpp"
#include "dtr/rng.hpp"

namespace dtr {

// Truncation window [a, b] with replacement ranges: values below a are
// redrawn from U(a1, a2), values above b from U(b1, b2).
struct Replacement {
  double a, b, a1, a2, b1, b2;
};

struct TruncationTable {
  Replacement l1{0.0, 10000.0, 0.0, 50.0, 5000.0, 10000.0};
  Replacement l2{0.06, 0.8, 0.03, 0.09, 0.7, 0.8};
  Replacement l3{-5.0, 5.0, -10.0, 3.0, 3.0, 10.0};
  Replacement y{-5.0, 5.0, -10.0, 3.0, 3.0, 10.0};
};

struct SimSpec {
  int n_subjects = 1000;
  int horizon = 11;  // K; time points 0..K+1
  std::uint64_t seed = 1;
  TruncationTable bounds{};

  void validate() const;
};

double draw_truncated_normal(double mu, double sigma, const Replacement& r, Rng& rng);

enum class RegimeKind { always_treat, threshold_750, threshold_350, never_treat };

// Treatment rule with joint censoring intervention c_k = 0. The threshold
// rules are absorbing through their t_{k-1} = 1 clause.
class Regime {
 public:
  constexpr explicit Regime(RegimeKind kind) : kind_(kind) {}

  RegimeKind kind() const { return kind_; }
  std::string_view name() const;
  bool is_dynamic() const {
    return kind_ == RegimeKind::threshold_750 || kind_ == RegimeKind::threshold_350;
  }

  int decide(double l1, double l2, double l3, int t_prev) const;

  static Regime parse(std::string_view name);
  static std::array<Regime, 4> all();

  bool operator==(const Regime&) const = default;

 private:
  RegimeKind kind_;
};

// d_k for subject `s` at time k given the previous assignment. Throws
// DataIntegrityError if L_k is missing.
int regime_decision(const Regime& regime, const Trajectory& s, int k, int t_prev);

// d_0..d_through computed recursively from the observed covariates with
// d_{-1} = 0. Subjects must have L observed through `through`.
TreatmentPaths regime_paths(const Panel& panel, std::span<const std::size_t> rows,
                            const Regime& regime, int through);

// Observed path with T_m replaced by the rule applied to the observed history
// (L_m, T_{m-1}); earlier assignments are left as observed.
TreatmentPaths current_step_paths(const Panel& panel, std::span<const std::size_t> rows,
                                  const Regime& regime, int m);

// C_{k+1} = 0 and T_j = d_j for all j <= k.
bool follows_regime(const Trajectory& s, const Regime& regime, int k);

// Generating-mechanism propensities of the structural model.
// P(T_k = 1 | history, T_{k-1} = t_prev).
double true_treatment_probability(const Trajectory& s, int k, int t_prev);
// P(C_k = 1 | L_k, T_{k-1} = t_prev), k >= 1.
double true_censoring_probability(const Trajectory& s, int k, int t_prev);

Panel simulate_panel(const SimSpec& spec);

struct GroundTruth {
  Regime regime{RegimeKind::never_treat};
  int horizon = 0;
  double value = 0.0;
  std::size_t mc_samples = 0;
  double mc_standard_error = 0.0;
};

// Counterfactual means of Y_{K+1} under the regime with censoring prevented.
// Returns one entry per horizon K = 0..spec.horizon from a single pass.
std::vector<GroundTruth> counterfactual_truths(const SimSpec& spec, const Regime& regime,
                                               std::size_t mc_samples);

GroundTruth counterfactual_truth(const SimSpec& spec, const Regime& regime,
                                 std::size_t mc_samples);

}  // namespace dtr
