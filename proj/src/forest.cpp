#include "dtr/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dtr/error.hpp"
#include "dtr/rng.hpp"

namespace dtr {

double RegressionTree::predict(const double* row, Eigen::Index stride) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(i)];
    i = row[n.feature * stride] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

Eigen::VectorXd ForestRegressor::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != n_features_)
    throw InvalidParameter("ForestRegressor::predict: expected " + std::to_string(n_features_) +
                           " columns, got " + std::to_string(x.cols()));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x.data() + i, x.rows());
    out(i) = s / static_cast<double>(trees_.size());
  }
  return out;
}

namespace {

struct Sample {
  Eigen::Index row;
  double w;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int min_leaf, int mtry, Rng& rng)
      : x_(x), y_(y), min_leaf_(min_leaf), mtry_(mtry), rng_(rng) {
    features_.resize(static_cast<std::size_t>(x.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<Sample> samples) {
    samples_ = std::move(samples);
    tree_.nodes.clear();
    grow(0, samples_.size());
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(std::size_t lo, std::size_t hi) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sw = 0.0, swy = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sw += samples_[i].w;
      swy += samples_[i].w * y_(samples_[i].row);
    }
    const double mean = sw > 0.0 ? swy / sw : 0.0;
    tree_.nodes[static_cast<std::size_t>(id)].value = mean;

    const std::size_t count = hi - lo;
    if (count < 2 * static_cast<std::size_t>(min_leaf_) || sw <= 0.0) return id;
    const Split best = find_split(lo, hi, sw, swy);
    if (best.feature < 0) return id;

    const auto mid_it = std::partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(lo), samples_.begin() + static_cast<std::ptrdiff_t>(hi),
        [&](const Sample& s) { return x_(s.row, best.feature) <= best.threshold; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - samples_.begin());
    const int left = grow(lo, mid);
    const int right = grow(mid, hi);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  Split find_split(std::size_t lo, std::size_t hi, double sw, double swy) {
    Split best;
    const std::size_t p = features_.size();
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(mtry_), p);
    // Partial Fisher-Yates draws m distinct candidate features.
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t k = j + static_cast<std::size_t>(rng_.below(p - j));
      std::swap(features_[j], features_[k]);
    }
    const double base = swy * swy / sw;
    const std::size_t count = hi - lo;
    for (std::size_t j = 0; j < m; ++j) {
      const int f = features_[j];
      buf_.clear();
      for (std::size_t i = lo; i < hi; ++i)
        buf_.push_back({x_(samples_[i].row, f), y_(samples_[i].row), samples_[i].w});
      std::sort(buf_.begin(), buf_.end(), [](const Entry& a, const Entry& b) { return a.x < b.x; });
      if (buf_.front().x == buf_.back().x) continue;
      double lw = 0.0, lwy = 0.0;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        lw += buf_[i].w;
        lwy += buf_[i].w * buf_[i].y;
        const std::size_t nl = i + 1;
        if (nl < static_cast<std::size_t>(min_leaf_)) continue;
        if (count - nl < static_cast<std::size_t>(min_leaf_)) break;
        if (buf_[i].x == buf_[i + 1].x) continue;
        const double rw = sw - lw;
        if (lw <= 0.0 || rw <= 0.0) continue;
        const double rwy = swy - lwy;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - base;
        if (gain > best.gain * (1.0 + 1e-12) + 1e-14 * std::abs(base)) {
          best.gain = gain;
          best.feature = f;
          // Midpoint, but never equal to the right value after rounding.
          double thr = 0.5 * (buf_[i].x + buf_[i + 1].x);
          if (!(thr < buf_[i + 1].x)) thr = buf_[i].x;
          best.threshold = thr;
        }
      }
    }
    return best;
  }

  struct Entry {
    double x, y, w;
  };

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  int min_leaf_;
  int mtry_;
  Rng& rng_;
  std::vector<int> features_;
  std::vector<Sample> samples_;
  std::vector<Entry> buf_;
  RegressionTree tree_;
};

}  // namespace

ForestRegressor fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const ForestParams& params, const Eigen::VectorXd* sample_weight) {
  const Eigen::Index n = x.rows();
  if (y.size() != n) throw InvalidParameter("fit_forest: |y| != rows(X)");
  if (params.n_trees < 1) throw InvalidParameter("fit_forest: n_trees must be positive");
  if (params.min_leaf < 1) throw InvalidParameter("fit_forest: min_leaf must be positive");
  if (n < params.min_leaf) throw InvalidParameter("fit_forest: fewer rows than min_leaf");
  if (sample_weight) {
    if (sample_weight->size() != n) throw InvalidParameter("fit_forest: weight length mismatch");
    if ((sample_weight->array() < 0.0).any()) throw InvalidParameter("fit_forest: negative weight");
  }
  const Eigen::Index p = x.cols();
  const int mtry = params.mtry > 0 ? params.mtry
                                   : std::max(1, static_cast<int>((p + 2) / 3));

  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  Eigen::VectorXd oob_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXi oob_count = Eigen::VectorXi::Zero(n);
  std::vector<int> in_bag(static_cast<std::size_t>(n));

  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t), 0x666f72657374));
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    std::fill(in_bag.begin(), in_bag.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = params.bootstrap ? static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))) : i;
      in_bag[static_cast<std::size_t>(r)] = 1;
      samples.push_back({r, sample_weight ? (*sample_weight)(r) : 1.0});
    }
    TreeBuilder builder(x, y, params.min_leaf, mtry, rng);
    trees.push_back(builder.build(std::move(samples)));
    if (params.bootstrap) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (in_bag[static_cast<std::size_t>(i)]) continue;
        oob_sum(i) += trees.back().predict(x.data() + i, n);
        ++oob_count(i);
      }
    }
  }

  std::optional<double> oob;
  double se = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (oob_count(i) == 0) continue;
    const double r = y(i) - oob_sum(i) / oob_count(i);
    se += r * r;
    ++used;
  }
  if (used > 0) oob = se / static_cast<double>(used);
  return ForestRegressor(std::move(trees), p, oob);
}

}  // namespace dtr
