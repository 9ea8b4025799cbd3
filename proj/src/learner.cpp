#include "dtr/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtr/error.hpp"
#include "dtr/linear.hpp"
#include "dtr/rng.hpp"

namespace dtr {

std::string_view learner_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::L1: return "L1";
    case LearnerKind::L2: return "L2";
    case LearnerKind::L3: return "L3";
    case LearnerKind::nn: return "nn";
    case LearnerKind::dkl: return "dkl";
    case LearnerKind::saturated: return "saturated";
  }
  return "?";
}

LearnerKind parse_learner(std::string_view name) {
  for (auto k : {LearnerKind::L1, LearnerKind::L2, LearnerKind::L3, LearnerKind::nn, LearnerKind::dkl,
                 LearnerKind::saturated})
    if (learner_name(k) == name) return k;
  throw InvalidParameter("unknown learner '" + std::string(name) + "'");
}

SaturatedRegressor::SaturatedRegressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd* sample_weight)
    : cols_(x.cols()) {
  if (y.size() != x.rows()) throw InvalidParameter("SaturatedRegressor: |y| != rows(X)");
  std::vector<std::pair<std::vector<double>, std::pair<double, double>>> rows;
  rows.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) key[static_cast<std::size_t>(j)] = x(i, j);
    const double w = sample_weight ? (*sample_weight)(i) : 1.0;
    rows.push_back({std::move(key), {w, w * y(i)}});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < rows.size();) {
    double sw = 0.0, swy = 0.0;
    std::size_t j = i;
    for (; j < rows.size() && rows[j].first == rows[i].first; ++j) {
      sw += rows[j].second.first;
      swy += rows[j].second.second;
    }
    if (sw > 0.0) {
      keys_.push_back(rows[i].first);
      means_.push_back(swy / sw);
    }
    i = j;
  }
}

Eigen::VectorXd SaturatedRegressor::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != cols_) throw InvalidParameter("SaturatedRegressor: column count mismatch");
  Eigen::VectorXd out(x.rows());
  std::vector<double> key(static_cast<std::size_t>(cols_));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < cols_; ++j) key[static_cast<std::size_t>(j)] = x(i, j);
    const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    if (it == keys_.end() || *it != key)
      throw EstimationError("SaturatedRegressor: no training data in the stratum of row " + std::to_string(i));
    out(i) = means_[static_cast<std::size_t>(it - keys_.begin())];
  }
  return out;
}

Eigen::VectorXd AveragingRegressor::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (const auto& m : members_) out += m->predict(x);
  return out / static_cast<double>(members_.size());
}

namespace {

std::shared_ptr<const Regressor> fit_candidate(const std::string& name, const Eigen::MatrixXd& x,
                                               const Eigen::VectorXd& y, std::uint64_t seed,
                                               const LearnerConfig& cfg, const Eigen::VectorXd* w) {
  if (name == "linear") {
    return std::make_shared<LinearRegressor>(w ? fit_wls(x, y, *w) : fit_ols(x, y));
  }
  if (name == "forest") {
    ForestParams p = cfg.forest;
    p.seed = derive_seed(seed, 0x666f72);
    return std::make_shared<ForestRegressor>(fit_forest(x, y, p, w));
  }
  if (name == "mlp" || name == "nn") {
    MlpParams p = name == "mlp" ? cfg.mlp : cfg.nn;
    p.seed = derive_seed(seed, 0x6d6c70);
    return std::make_shared<MlpRegressor>(fit_mlp(x, y, p, w, name));
  }
  if (name == "dkl") {
    if (w) throw InvalidParameter("dkl learner does not take sample weights");
    DklConfig c = cfg.dkl;
    c.seed = derive_seed(seed, 0x646b6c);
    return std::make_shared<DklModel>(fit_dkl(x, y, c));
  }
  if (name == "saturated") return std::make_shared<SaturatedRegressor>(x, y, w);
  throw InvalidParameter("unknown candidate '" + name + "'");
}

std::vector<std::string> candidates_of(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::L1: return {"linear"};
    case LearnerKind::L2: return {"linear", "forest"};
    case LearnerKind::L3: return {"linear", "forest", "mlp"};
    case LearnerKind::nn: return {"nn"};
    case LearnerKind::dkl: return {"dkl"};
    case LearnerKind::saturated: return {"saturated"};
  }
  return {};
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(idx[r]);
  return out;
}

}  // namespace

LearnerFit fit_learner(LearnerKind kind, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed,
                       const LearnerConfig& config, const Eigen::VectorXd* sample_weight) {
  if (y.size() != x.rows()) throw InvalidParameter("fit_learner: |y| != rows(X)");
  if (x.rows() == 0) throw EstimationError("fit_learner: no rows to fit");
  LearnerFit fit;
  fit.candidates = candidates_of(kind);
  const std::size_t nc = fit.candidates.size();

  if (nc == 1) {
    fit.chosen = fit.candidates.front();
    fit.model = fit_candidate(fit.chosen, x, y, seed, config, sample_weight);
    return fit;
  }
  if (config.averaging) {
    std::vector<std::shared_ptr<const Regressor>> members;
    for (const auto& c : fit.candidates) members.push_back(fit_candidate(c, x, y, seed, config, sample_weight));
    fit.chosen = "average";
    fit.model = std::make_shared<AveragingRegressor>(std::move(members));
    return fit;
  }

  const Eigen::Index n = x.rows();
  const int folds = static_cast<int>(std::min<Eigen::Index>(config.folds, n));
  fit.cv_mse.assign(nc, 0.0);
  if (folds >= 2) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, 0x6376));
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<double> wsum(nc, 0.0);
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, valid;
      for (Eigen::Index r = 0; r < n; ++r)
        (r % folds == f ? valid : train).push_back(perm[static_cast<std::size_t>(r)]);
      const Eigen::MatrixXd xt = take_rows(x, train), xv = take_rows(x, valid);
      const Eigen::VectorXd yt = take(y, train), yv = take(y, valid);
      Eigen::VectorXd wt, wv = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(valid.size()));
      if (sample_weight) {
        wt = take(*sample_weight, train);
        wv = take(*sample_weight, valid);
      }
      for (std::size_t c = 0; c < nc; ++c) {
        if (!std::isfinite(fit.cv_mse[c])) continue;
        try {
          const auto m = fit_candidate(fit.candidates[c], xt, yt, derive_seed(seed, 0x6376, static_cast<std::uint64_t>(f + 1)),
                                       config, sample_weight ? &wt : nullptr);
          const Eigen::VectorXd r = m->predict(xv) - yv;
          fit.cv_mse[c] += wv.dot(r.cwiseAbs2());
          wsum[c] += wv.sum();
        } catch (const Error&) {
          if (c == 0) throw;
          fit.cv_mse[c] = std::numeric_limits<double>::infinity();
        }
      }
    }
    for (std::size_t c = 0; c < nc; ++c)
      if (std::isfinite(fit.cv_mse[c])) fit.cv_mse[c] = wsum[c] > 0.0 ? fit.cv_mse[c] / wsum[c] : 0.0;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < nc; ++c)
    if (fit.cv_mse[c] < fit.cv_mse[best]) best = c;
  fit.chosen = fit.candidates[best];
  fit.model = fit_candidate(fit.chosen, x, y, seed, config, sample_weight);
  return fit;
}

LearnerFit select_learner(LearnerKind set, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds,
                          std::uint64_t seed, const LearnerConfig& config) {
  if (set != LearnerKind::L1 && set != LearnerKind::L2 && set != LearnerKind::L3)
    throw InvalidParameter("select_learner: learner set must be L1, L2 or L3");
  LearnerConfig c = config;
  c.folds = folds;
  return fit_learner(set, x, y, seed, c);
}

}  // namespace dtr
