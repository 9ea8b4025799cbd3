#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dtr/logistic.hpp"
#include "dtr/panel.hpp"
#include "dtr/sim.hpp"

namespace dtr {

struct Truncation {
  bool enabled = true;
  double lo = 0.1;
  double hi = 0.9;
};

double truncate_probability(double p, double lo = 0.1, double hi = 0.9);

// Treatment and censoring mechanisms at each time m. Histories are taken from
// the panel except for treatments, which come from `paths` (row r of paths
// belongs to rows[r]; columns 0..m are used).
class Propensities {
 public:
  virtual ~Propensities() = default;
  // P(T_m = 1 | V, L_0..L_m, Y_0..Y_m, T_0..T_{m-1}), rows uncensored at m.
  virtual Eigen::VectorXd treated(const Panel& panel, std::span<const std::size_t> rows, int m,
                                  const TreatmentPaths& paths) const = 0;
  // P(C_{m+1} = 0 | V, L_0..L_{m+1}, Y_0..Y_m, T_0..T_m), rows uncensored at m.
  virtual Eigen::VectorXd retained(const Panel& panel, std::span<const std::size_t> rows, int m,
                                   const TreatmentPaths& paths) const = 0;
  // P(T_m = paths(r, m) | ...); by default derived from treated().
  virtual Eigen::VectorXd arm(const Panel& panel, std::span<const std::size_t> rows, int m,
                              const TreatmentPaths& paths) const;
};

enum class PropensityMode { all_uncensored, regime_followers };

struct PropensityStep {
  LogisticModel treatment;
  LogisticModel censoring;
  std::size_t treatment_rows = 0;
  std::size_t censoring_rows = 0;
};

// Logistic treatment and censoring models, 2(K+1) in total.
class FittedPropensities final : public Propensities {
 public:
  FittedPropensities(int horizon, std::vector<PropensityStep> steps) : horizon_(horizon), steps_(std::move(steps)) {}

  Eigen::VectorXd treated(const Panel& panel, std::span<const std::size_t> rows, int m,
                          const TreatmentPaths& paths) const override;
  Eigen::VectorXd retained(const Panel& panel, std::span<const std::size_t> rows, int m,
                           const TreatmentPaths& paths) const override;

  int horizon() const { return horizon_; }
  const std::vector<PropensityStep>& steps() const { return steps_; }

 private:
  int horizon_;
  std::vector<PropensityStep> steps_;
};

// Probabilities of the structural generator (exact for simulated panels).
class OraclePropensities final : public Propensities {
 public:
  Eigen::VectorXd treated(const Panel& panel, std::span<const std::size_t> rows, int m,
                          const TreatmentPaths& paths) const override;
  Eigen::VectorXd retained(const Panel& panel, std::span<const std::size_t> rows, int m,
                           const TreatmentPaths& paths) const override;
};

// Every arm and retention has probability one.
class UnitPropensities final : public Propensities {
 public:
  Eigen::VectorXd arm(const Panel&, std::span<const std::size_t> rows, int, const TreatmentPaths&) const override {
    return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
  }
  Eigen::VectorXd treated(const Panel&, std::span<const std::size_t> rows, int, const TreatmentPaths&) const override {
    return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
  }
  Eigen::VectorXd retained(const Panel&, std::span<const std::size_t> rows, int, const TreatmentPaths&) const override {
    return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
  }
};

// Treatment model at m fit on rows with C_m = 0 (followers additionally need
// T_0..T_{m-1} = d_0..d_{m-1}); censoring model at m fit on rows with C_m = 0
// (followers: T_0..T_m = d_0..d_m). Throws EstimationError naming m when a
// fitting subset is empty.
FittedPropensities fit_propensities(const Panel& panel, PropensityMode mode,
                                    const Regime* regime = nullptr);

// P(T_m = paths(r, m)), truncated if enabled. `hits` counts truncated entries.
Eigen::VectorXd arm_probability(const Propensities& props, const Panel& panel, std::span<const std::size_t> rows,
                                int m, const TreatmentPaths& paths, const Truncation& trunc,
                                std::size_t* hits = nullptr);
Eigen::VectorXd retention_probability(const Propensities& props, const Panel& panel,
                                      std::span<const std::size_t> rows, int m, const TreatmentPaths& paths,
                                      const Truncation& trunc, std::size_t* hits = nullptr);

// w / sum(w). Throws on a non-positive sum.
Eigen::VectorXd normalize_weights(const Eigen::VectorXd& w);

// Weights consumed at step m of the two-step estimator.
struct StepWeights {
  int m = 0;
  std::vector<std::size_t> rows;  // C_m = 0
  std::vector<bool> retained;     // C_{m+1} = 0, per row
  // Observed-history weight (product of inverse treatment and censoring
  // probabilities through m); NaN where C_{m+1} = 1.
  Eigen::VectorXd w;
  // Same chain with T_m replaced by the regime's choice in the last
  // treatment and censoring factors; defined for every row.
  Eigen::VectorXd w_md;
  // Per-step probabilities (after truncation), for audit.
  Eigen::VectorXd p_treat_obs, p_treat_md, p_retain_obs, p_retain_md;
};

struct WeightTable {
  std::vector<StepWeights> steps;  // m = 0..K
  bool normalized = false;
  std::size_t truncation_hits = 0;

  // w over the retained rows and w_md over all rows of step m, each scaled
  // to sum to one.
  void normalize();
};

// Cumulative weights (observed and modified) for every m.
WeightTable cumulative_weights(const Panel& panel, const Propensities& props, const Regime& regime,
                               const Truncation& trunc = {});

void write_weights_csv(const Panel& panel, const WeightTable& table, const std::filesystem::path& path);

// Cumulative regime probability g_m = prod_{k<=m} P(T_k = d_k) P(C_{k+1} = 0)
// with the regime path plugged in, for every row with C_m = 0 (one vector per
// m = 0..K, aligned with at_risk(panel, m)).
struct RegimeProbabilities {
  std::vector<std::vector<std::size_t>> rows;
  std::vector<Eigen::VectorXd> g;
  std::size_t truncation_hits = 0;
};

RegimeProbabilities regime_probabilities(const Panel& panel, const Propensities& props, const Regime& regime,
                                         const Truncation& trunc = {});

}  // namespace dtr
