#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

namespace dtr {

// A trained outcome model. Implementations are immutable after fitting and
// safe to share across threads.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;

  // Only models with a predictive distribution override this.
  virtual std::optional<Eigen::VectorXd> predict_variance(const Eigen::MatrixXd&) const {
    return std::nullopt;
  }

  virtual std::string kind() const = 0;
};

}  // namespace dtr
