#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dtr/rng.hpp"

namespace dtr {

// Fully connected network: ReLU on every hidden layer, identity output.
// Parameters live in one flat vector laid out per layer as W (in x out,
// column-major) followed by b (out).
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<int> sizes);  // {in, h1, ..., out}

  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index parameter_count() const { return total_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }

  // He-normal weights (std sqrt(2 / fan_in)), zero biases.
  Eigen::VectorXd initialize(Rng& rng) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer (post-activation, post-dropout)
    std::vector<Eigen::MatrixXd> masks;   // dropout scaling per hidden layer (empty if none)
  };

  // Rows of x are samples. `dropout` is the drop probability of hidden units
  // (inverted dropout); it is applied only when `rng` is given.
  Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                          Cache* cache = nullptr, double dropout = 0.0, Rng* rng = nullptr) const;

  // Gradient w.r.t. the parameters given d(loss)/d(output) for the batch
  // recorded in `cache`.
  Eigen::VectorXd backward(const Eigen::VectorXd& params, const Cache& cache,
                           const Eigen::MatrixXd& d_out) const;

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of W for each layer
  Eigen::Index total_ = 0;
};

class Adam {
 public:
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  int steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

}  // namespace dtr
