#include "dtr/dense_net.hpp"

#include <cmath>

#include "dtr/error.hpp"

namespace dtr {

DenseNet::DenseNet(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw InvalidParameter("DenseNet: need at least input and output sizes");
  for (int s : sizes_)
    if (s <= 0) throw InvalidParameter("DenseNet: layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total_);
    total_ += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
}

Eigen::VectorXd DenseNet::initialize(Rng& rng) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(total_);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const Eigen::Index nw = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    const double sd = std::sqrt(2.0 / sizes_[l]);
    for (Eigen::Index i = 0; i < nw; ++i) p(offsets_[l] + i) = sd * rng.normal();
  }
  return p;
}

Eigen::MatrixXd DenseNet::forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                  Cache* cache, double dropout, Rng* rng) const {
  if (params.size() != total_) throw InvalidParameter("DenseNet: parameter vector size mismatch");
  if (x.cols() != sizes_.front())
    throw InvalidParameter("DenseNet: expected " + std::to_string(sizes_.front()) + " inputs, got " +
                           std::to_string(x.cols()));
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidParameter("DenseNet: dropout must be in [0, 1)");
  const std::size_t layers = sizes_.size() - 1;
  if (cache) {
    cache->inputs.assign(layers, Eigen::MatrixXd());
    cache->masks.assign(layers, Eigen::MatrixXd());
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params.data() + offsets_[l], in, out);
    Eigen::Map<const Eigen::RowVectorXd> b(params.data() + offsets_[l] + in * out, out);
    Eigen::MatrixXd z = a * w;
    z.rowwise() += b;
    if (cache) cache->inputs[l] = std::move(a);
    if (l + 1 == layers) return z;
    a = z.cwiseMax(0.0);
    if (rng && dropout > 0.0) {
      const double keep = 1.0 - dropout;
      Eigen::MatrixXd mask(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
      a.array() *= mask.array();
      if (cache) cache->masks[l] = std::move(mask);
    }
  }
  return a;  // unreachable
}

Eigen::VectorXd DenseNet::backward(const Eigen::VectorXd& params, const Cache& cache,
                                   const Eigen::MatrixXd& d_out) const {
  const std::size_t layers = sizes_.size() - 1;
  if (cache.inputs.size() != layers) throw StateError("DenseNet::backward: missing forward cache");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(total_);
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const Eigen::MatrixXd& a = cache.inputs[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], in, out);
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + offsets_[l] + in * out, out);
    gw.noalias() = a.transpose() * delta;
    gb = delta.colwise().sum();
    if (l == 0) break;
    Eigen::Map<const Eigen::MatrixXd> w(params.data() + offsets_[l], in, out);
    Eigen::MatrixXd prev = delta * w.transpose();
    // `a` is relu(z) times the dropout mask: positive exactly where both
    // factors pass gradient.
    prev.array() *= (a.array() > 0.0).cast<double>();
    const Eigen::MatrixXd& mask = cache.masks[l - 1];
    if (mask.size() > 0) prev.array() *= mask.array();
    delta = std::move(prev);
  }
  return grad;
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size())
    throw InvalidParameter("Adam::step: size mismatch");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace dtr
