#include "dtr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dtr/error.hpp"
#include "dtr/linear.hpp"
#include "dtr/logistic.hpp"

namespace dtr {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::iptw: return "iptw";
    case Method::msm: return "msm";
    case Method::seq_g: return "seq_g";
    case Method::ltmle: return "ltmle";
    case Method::ts: return "ts";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::iptw, Method::msm, Method::seq_g, Method::ltmle, Method::ts})
    if (method_name(m) == name) return m;
  throw InvalidParameter("unknown method '" + std::string(name) + "'");
}

bool method_uses_learner(Method m) { return m == Method::seq_g || m == Method::ltmle || m == Method::ts; }

namespace {

constexpr double kLogitCap = 35.0;

std::unique_ptr<Propensities> make_propensities(const Panel& panel, const EstimatorConfig& cfg,
                                                PropensityMode mode, Diagnostics& diag) {
  switch (cfg.propensities) {
    case PropensitySource::oracle: return std::make_unique<OraclePropensities>();
    case PropensitySource::unit: return std::make_unique<UnitPropensities>();
    case PropensitySource::fitted: break;
  }
  auto fitted = std::make_unique<FittedPropensities>(fit_propensities(panel, mode, &cfg.regime));
  for (std::size_t m = 0; m < fitted->steps().size(); ++m) {
    if (fitted->steps()[m].treatment.separated) diag.separated_treatment_models.push_back(static_cast<int>(m));
    if (fitted->steps()[m].censoring.separated) diag.separated_censoring_models.push_back(static_cast<int>(m));
  }
  return fitted;
}

Truncation effective_truncation(const EstimatorConfig& cfg) {
  Truncation t = cfg.truncation;
  if (cfg.propensities != PropensitySource::fitted) t.enabled = false;
  return t;
}

// The regime's path for the requested plug-in mode, rows uncensored at m.
TreatmentPaths plug_paths(const Panel& panel, const std::vector<std::size_t>& rows, const Regime& regime, int m,
                          PlugIn plug) {
  return plug == PlugIn::full ? regime_paths(panel, rows, regime, m) : current_step_paths(panel, rows, regime, m);
}

// Position of each element of `sub` inside the sorted superset `all`.
std::vector<Eigen::Index> positions(const std::vector<std::size_t>& all, const std::vector<std::size_t>& sub) {
  std::vector<Eigen::Index> out;
  out.reserve(sub.size());
  auto it = all.begin();
  for (std::size_t r : sub) {
    it = std::lower_bound(it, all.end(), r);
    if (it == all.end() || *it != r) throw StateError("positions: row missing from superset");
    out.push_back(static_cast<Eigen::Index>(it - all.begin()));
  }
  return out;
}

Eigen::MatrixXd append_column(const Eigen::MatrixXd& x, const Eigen::VectorXd& c) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()) = c;
  return out;
}

bool same_path(const TreatmentPaths& a, Eigen::Index ra, const TreatmentPaths& b, Eigen::Index rb, int through) {
  for (int j = 0; j <= through; ++j)
    if (a(ra, j) != b(rb, j)) return false;
  return true;
}

double scale_outcome(double y, const EstimatorConfig& cfg) {
  const double s = (y - cfg.y_lo) / (cfg.y_hi - cfg.y_lo);
  return std::clamp(s, cfg.y_margin, 1.0 - cfg.y_margin);
}

struct Prediction {
  Eigen::VectorXd mean;
  std::optional<Eigen::VectorXd> variance;
  std::optional<double> min_raw;
};

Prediction predict_with(const Regressor& model, const Eigen::MatrixXd& x) {
  Prediction p;
  if (const auto* gp = dynamic_cast<const DklModel*>(&model)) {
    GpPosterior post = gp->predict_full(x);
    p.mean = std::move(post.mean);
    p.min_raw = post.raw_variance.size() ? post.raw_variance.minCoeff() : 0.0;
    p.variance = std::move(post.variance);
  } else {
    p.mean = model.predict(x);
  }
  if (!p.mean.allFinite()) throw NumericalError("outcome model produced non-finite predictions");
  return p;
}

// What differs between the ICE-type estimators.
struct IceSpec {
  PlugIn plug = PlugIn::full;
  IceScheme scheme = IceScheme::single;
  bool scaled = false;
  // ts
  const WeightTable* weights = nullptr;
  bool loss_weight = false;
  // ltmle
  const RegimeProbabilities* g = nullptr;
  bool zero_fluctuation = false;
};

Estimate run_ice(const Panel& panel, const EstimatorConfig& cfg, const IceSpec& spec, Estimate est) {
  const int K = panel.horizon();
  est.horizon = K;
  est.regime = cfg.regime;
  est.learner = std::string(learner_name(cfg.learner));

  // Q_{K+1} = Y_{K+1} over C_{K+1} = 0.
  std::vector<std::size_t> next_rows = at_risk(panel, K + 1);
  if (next_rows.empty()) throw EstimationError("no uncensored subjects at time " + std::to_string(K + 1));
  Eigen::VectorXd q(static_cast<Eigen::Index>(next_rows.size()));
  for (std::size_t r = 0; r < next_rows.size(); ++r) {
    const double y = panel[next_rows[r]].at(K + 1).y;
    q(static_cast<Eigen::Index>(r)) = spec.scaled ? scale_outcome(y, cfg) : y;
  }

  for (int m = K; m >= 0; --m) {
    StepDiagnostics sd;
    sd.m = m;
    const std::vector<std::size_t>& fit_rows = next_rows;
    const std::vector<std::size_t> pred_rows = at_risk(panel, m);
    if (fit_rows.empty()) throw EstimationError("no uncensored subjects at time " + std::to_string(m + 1));
    sd.fit_rows = fit_rows.size();
    sd.predict_rows = pred_rows.size();
    const std::vector<Eigen::Index> fit_pos = positions(pred_rows, fit_rows);
    const std::uint64_t step_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(m));

    try {
      Eigen::MatrixXd x_fit = history_features(panel, fit_rows, m + 1).x;
      const TreatmentPaths paths = plug_paths(panel, pred_rows, cfg.regime, m, spec.plug);
      Eigen::MatrixXd x_pred = spec.scheme == IceScheme::single
                                   ? history_features(panel, pred_rows, m + 1, {}, &paths).x
                                   : history_features(panel, pred_rows, m + 1).x;

      Eigen::VectorXd fit_weight;
      if (spec.weights) {
        const StepWeights& sw = spec.weights->steps[static_cast<std::size_t>(m)];
        Eigen::VectorXd wf(static_cast<Eigen::Index>(fit_rows.size()));
        for (std::size_t r = 0; r < fit_rows.size(); ++r) wf(static_cast<Eigen::Index>(r)) = sw.w(fit_pos[r]);
        if (spec.loss_weight) {
          fit_weight = wf;
        } else {
          x_fit = append_column(x_fit, wf);
          x_pred = append_column(x_pred, sw.w_md);
        }
      }

      const LearnerFit lf = fit_learner(cfg.learner, x_fit, q, step_seed, cfg.learners,
                                        fit_weight.size() ? &fit_weight : nullptr);
      sd.chosen = lf.chosen;
      Prediction pred = predict_with(*lf.model, x_pred);
      Eigen::VectorXd qm = std::move(pred.mean);
      if (pred.variance) {
        sd.mean_variance = pred.variance->mean();
        sd.min_raw_variance = pred.min_raw;
        if (m == 0) est.diagnostics.final_variances.assign(pred.variance->data(), pred.variance->data() + pred.variance->size());
      }

      if (spec.scheme == IceScheme::nodewise) {
        const FeatureOptions inner{true, true, true};
        const Eigen::MatrixXd x2 = history_features(panel, pred_rows, m, inner).x;
        const TreatmentPaths full = regime_paths(panel, pred_rows, cfg.regime, m);
        const Eigen::MatrixXd x2_pred = history_features(panel, pred_rows, m, inner, &full).x;
        const LearnerFit lf2 = fit_learner(cfg.learner, x2, qm, derive_seed(step_seed, 1), cfg.learners);
        qm = predict_with(*lf2.model, x2_pred).mean;
      }

      if (spec.scaled) qm = qm.cwiseMax(cfg.y_margin).cwiseMin(1.0 - cfg.y_margin);

      if (spec.g) {
        // Targeting: no-intercept logistic fluctuation along 1/g over the
        // uncensored followers, offset by the initial fit.
        const Eigen::VectorXd& g = spec.g->g[static_cast<std::size_t>(m)];
        const TreatmentPaths obs = observed_treatments(panel, fit_rows, m);
        std::vector<Eigen::Index> fol;  // indices into fit_rows
        for (std::size_t r = 0; r < fit_rows.size(); ++r)
          if (same_path(obs, static_cast<Eigen::Index>(r), paths, fit_pos[r], m)) fol.push_back(static_cast<Eigen::Index>(r));
        sd.followers = fol.size();
        if (fol.empty()) throw EstimationError("no regime followers at step m=" + std::to_string(m));
        double eps = 0.0;
        if (!spec.zero_fluctuation) {
          Eigen::MatrixXd h(static_cast<Eigen::Index>(fol.size()), 1);
          Eigen::VectorXd off(h.rows()), yf(h.rows());
          for (std::size_t i = 0; i < fol.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const Eigen::Index pp = fit_pos[static_cast<std::size_t>(fol[i])];
            h(ii, 0) = 1.0 / g(pp);
            off(ii) = logit(qm(pp));
            yf(ii) = q(fol[i]);
          }
          if ((h.array() == 0.0).all()) {
            sd.fluctuation_skipped = true;
          } else {
            LogisticOptions lo;
            lo.intercept = false;
            lo.offset = &off;
            try {
              eps = fit_logistic(h, yf, lo).coefficients(0);
              if (!std::isfinite(eps)) throw NumericalError("non-finite fluctuation");
            } catch (const NumericalError&) {
              eps = 0.0;
              sd.fluctuation_skipped = true;
            }
          }
        }
        sd.epsilon = eps;
        if (eps != 0.0) {
          for (Eigen::Index i = 0; i < qm.size(); ++i)
            qm(i) = expit(std::clamp(logit(qm(i)) + eps / g(i), -kLogitCap, kLogitCap));
        }
      }
      sd.mean_q = qm.mean();
      q = std::move(qm);
    } catch (const EstimationError&) {
      throw;
    } catch (const Error& e) {
      throw EstimationError(std::string(method_name(est.method)) + " step m=" + std::to_string(m) + ": " + e.what());
    }
    next_rows = pred_rows;
    est.diagnostics.steps.push_back(std::move(sd));
  }
  const double mean = q.mean();
  if (spec.scaled) {
    est.diagnostics.scaled_value = mean;
    est.value = cfg.y_lo + mean * (cfg.y_hi - cfg.y_lo);
  } else {
    est.value = mean;
  }
  if (!std::isfinite(est.value)) throw NumericalError("non-finite estimate");
  return est;
}

}  // namespace

Estimate estimate_iptw(const Panel& panel, const EstimatorConfig& cfg) {
  Estimate est;
  est.method = Method::iptw;
  est.regime = cfg.regime;
  const int K = panel.horizon();
  est.horizon = K;
  auto props = make_propensities(panel, cfg, PropensityMode::regime_followers, est.diagnostics);
  const RegimeProbabilities g = regime_probabilities(panel, *props, cfg.regime, effective_truncation(cfg));
  est.diagnostics.truncation_hits = g.truncation_hits;
  const auto& rows = g.rows[static_cast<std::size_t>(K)];
  double num = 0.0, den = 0.0;
  std::size_t followers = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Trajectory& s = panel[rows[r]];
    if (!follows_regime(s, cfg.regime, K)) continue;
    const double w = 1.0 / g.g[static_cast<std::size_t>(K)](static_cast<Eigen::Index>(r));
    num += w * s.at(K + 1).y;
    den += w;
    ++followers;
  }
  est.diagnostics.followers = followers;
  if (followers == 0) throw EstimationError("iptw: no subject follows regime " + std::string(cfg.regime.name()));
  est.value = cfg.horvitz_thompson ? num / static_cast<double>(panel.size()) : num / den;
  return est;
}

std::vector<Estimate> estimate_msm(const Panel& panel, const std::vector<Regime>& family, const EstimatorConfig& cfg) {
  if (family.empty()) throw InvalidParameter("msm: empty regime family");
  const int K = panel.horizon();
  const Truncation trunc = effective_truncation(cfg);

  std::vector<double> ys, cums, ws;
  std::vector<Estimate> out;
  std::vector<double> mean_cum;
  for (const Regime& regime : family) {
    Estimate est;
    est.method = Method::msm;
    est.regime = regime;
    est.horizon = K;
    EstimatorConfig rc = cfg;
    rc.regime = regime;
    auto props = make_propensities(panel, rc, PropensityMode::regime_followers, est.diagnostics);
    const RegimeProbabilities g = regime_probabilities(panel, *props, regime, trunc);
    est.diagnostics.truncation_hits = g.truncation_hits;
    const auto& rows = g.rows[static_cast<std::size_t>(K)];
    std::vector<double> y, c, w;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Trajectory& s = panel[rows[r]];
      if (!follows_regime(s, regime, K)) continue;
      int cum = 0;
      for (int j = 0; j <= K; ++j) cum += s.at(j).t;
      y.push_back(s.at(K + 1).y);
      c.push_back(cum);
      w.push_back(1.0 / g.g[static_cast<std::size_t>(K)](static_cast<Eigen::Index>(r)));
    }
    est.diagnostics.followers = y.size();
    if (y.empty()) throw EstimationError("msm: no subject follows regime " + std::string(regime.name()));
    const double sw = std::accumulate(w.begin(), w.end(), 0.0);
    double mc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] /= sw;
      mc += w[i] * c[i];
    }
    mean_cum.push_back(mc);
    ys.insert(ys.end(), y.begin(), y.end());
    cums.insert(cums.end(), c.begin(), c.end());
    ws.insert(ws.end(), w.begin(), w.end());
    out.push_back(std::move(est));
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(cums.data(), n);
  const LinearModel lm = fit_wls(x, Eigen::Map<const Eigen::VectorXd>(ys.data(), n), Eigen::Map<const Eigen::VectorXd>(ws.data(), n));
  if (!lm.kept[0]) throw EstimationError("msm: cumulative treatment is constant across the pooled followers (rank deficient)");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].value = lm.intercept + lm.coefficients(0) * mean_cum[i];
    out[i].diagnostics.msm_theta0 = lm.intercept;
    out[i].diagnostics.msm_theta1 = lm.coefficients(0);
  }
  return out;
}

Estimate estimate_seq_g(const Panel& panel, const EstimatorConfig& cfg) {
  Estimate est;
  est.method = Method::seq_g;
  IceSpec spec;
  spec.plug = cfg.plug_in;
  spec.scheme = cfg.scheme;
  spec.scaled = cfg.scaled_outcome;
  return run_ice(panel, cfg, spec, std::move(est));
}

Estimate estimate_ltmle(const Panel& panel, const EstimatorConfig& cfg) {
  Estimate est;
  est.method = Method::ltmle;
  auto props = make_propensities(panel, cfg, PropensityMode::regime_followers, est.diagnostics);
  const RegimeProbabilities g = regime_probabilities(panel, *props, cfg.regime, effective_truncation(cfg));
  est.diagnostics.truncation_hits = g.truncation_hits;
  IceSpec spec;
  spec.plug = PlugIn::full;
  spec.scaled = true;
  spec.g = &g;
  spec.zero_fluctuation = cfg.zero_fluctuation;
  return run_ice(panel, cfg, spec, std::move(est));
}

Estimate estimate_ts(const Panel& panel, const EstimatorConfig& cfg) {
  Estimate est;
  est.method = Method::ts;
  auto props = make_propensities(panel, cfg, PropensityMode::all_uncensored, est.diagnostics);
  WeightTable wt = cumulative_weights(panel, *props, cfg.regime, effective_truncation(cfg));
  est.diagnostics.truncation_hits = wt.truncation_hits;
  wt.normalize();
  IceSpec spec;
  spec.plug = PlugIn::current;
  spec.weights = &wt;
  spec.loss_weight = cfg.ts_loss_weight;
  return run_ice(panel, cfg, spec, std::move(est));
}

Estimate estimate(const Panel& panel, const EstimatorConfig& cfg) {
  switch (cfg.method) {
    case Method::iptw: return estimate_iptw(panel, cfg);
    case Method::seq_g: return estimate_seq_g(panel, cfg);
    case Method::ltmle: return estimate_ltmle(panel, cfg);
    case Method::ts: return estimate_ts(panel, cfg);
    case Method::msm: {
      const auto all = Regime::all();
      for (auto& e : estimate_msm(panel, std::vector<Regime>(all.begin(), all.end()), cfg))
        if (e.regime == cfg.regime) return e;
      break;
    }
  }
  throw StateError("estimate: unhandled method");
}

}  // namespace dtr
