#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dtr/regressor.hpp"

namespace dtr {

struct ForestParams {
  int n_trees = 100;
  int min_leaf = 5;
  int mtry = 0;  // 0 -> ceil(p / 3)
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

// Flattened CART regression tree. Leaves have feature == -1.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const double* row, Eigen::Index stride) const;
};

class ForestRegressor final : public Regressor {
 public:
  ForestRegressor(std::vector<RegressionTree> trees, Eigen::Index n_features,
                  std::optional<double> oob_mse)
      : trees_(std::move(trees)), n_features_(n_features), oob_mse_(oob_mse) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
  std::string kind() const override { return "forest"; }

  std::size_t size() const { return trees_.size(); }
  // Out-of-bag mean squared error; empty when no row was ever out of bag.
  std::optional<double> oob_mse() const { return oob_mse_; }

 private:
  std::vector<RegressionTree> trees_;
  Eigen::Index n_features_;
  std::optional<double> oob_mse_;
};

ForestRegressor fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const ForestParams& params = {},
                           const Eigen::VectorXd* sample_weight = nullptr);

}  // namespace dtr
