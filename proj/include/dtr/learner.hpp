#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dtr/dkl.hpp"
#include "dtr/forest.hpp"
#include "dtr/mlp.hpp"
#include "dtr/regressor.hpp"

namespace dtr {

// Outcome learners: the three learner sets, the TS network, the deep-kernel
// GP, and a cell-mean model for fully discrete designs.
enum class LearnerKind { L1, L2, L3, nn, dkl, saturated };

std::string_view learner_name(LearnerKind kind);
LearnerKind parse_learner(std::string_view name);

struct LearnerConfig {
  ForestParams forest{};
  MlpParams mlp{{128}, 100, 1e-3, 0.0, 32, 1, true};      // learner-set network
  MlpParams nn{{128, 64, 32}, 5, 0.01, 0.9, 32, 1, true};  // TS-NN
  DklConfig dkl{};
  int folds = 5;
  // Equal-weight average of the set's candidates instead of the CV winner.
  bool averaging = false;
};

struct LearnerFit {
  std::shared_ptr<const Regressor> model;
  std::string chosen;           // winning candidate ("linear", "forest", "mlp", ...)
  std::vector<std::string> candidates;
  std::vector<double> cv_mse;   // per candidate; empty for singletons
};

// Fits the learner on (x, y). Sets are resolved by K-fold cross-validation
// (discrete super learner, ties to the earlier candidate). `sample_weight`
// turns the squared-error loss into a weighted one where supported.
LearnerFit fit_learner(LearnerKind kind, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       std::uint64_t seed, const LearnerConfig& config = {},
                       const Eigen::VectorXd* sample_weight = nullptr);

// Same as fit_learner restricted to the sets L1, L2, L3.
LearnerFit select_learner(LearnerKind set, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          int folds, std::uint64_t seed, const LearnerConfig& config = {});

// Mean of y within each distinct row of x. Predicting an unseen row throws
// EstimationError (no data for that stratum).
class SaturatedRegressor final : public Regressor {
 public:
  SaturatedRegressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const Eigen::VectorXd* sample_weight = nullptr);
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
  std::string kind() const override { return "saturated"; }
  std::size_t cells() const { return keys_.size(); }

 private:
  std::vector<std::vector<double>> keys_;  // sorted
  std::vector<double> means_;
  Eigen::Index cols_;
};

class AveragingRegressor final : public Regressor {
 public:
  explicit AveragingRegressor(std::vector<std::shared_ptr<const Regressor>> members)
      : members_(std::move(members)) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
  std::string kind() const override { return "average"; }

 private:
  std::vector<std::shared_ptr<const Regressor>> members_;
};

}  // namespace dtr
