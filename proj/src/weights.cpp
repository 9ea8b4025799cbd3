#include "dtr/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dtr/error.hpp"

namespace dtr {

double truncate_probability(double p, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidParameter("truncate_probability: lo > hi");
  return std::min(std::max(p, lo), hi);
}

namespace {

FeatureOptions treatment_features() { return {true, true, false}; }

// Paths restricted to the subset `keep` of its rows.
TreatmentPaths subset_paths(const TreatmentPaths& paths, const std::vector<std::size_t>& keep) {
  TreatmentPaths out(static_cast<Eigen::Index>(keep.size()), paths.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = paths.row(static_cast<Eigen::Index>(keep[r]));
  return out;
}

void check_paths(std::span<const std::size_t> rows, const TreatmentPaths& paths, int need_cols) {
  if (paths.rows() != static_cast<Eigen::Index>(rows.size()) || paths.cols() < need_cols)
    throw InvalidParameter("propensities: treatment paths do not cover the requested rows/times");
}

}  // namespace

Eigen::VectorXd FittedPropensities::treated(const Panel& panel, std::span<const std::size_t> rows, int m,
                                            const TreatmentPaths& paths) const {
  if (m < 0 || m > horizon_) throw InvalidParameter("FittedPropensities: time index out of range");
  check_paths(rows, paths, m);
  const DesignMatrix d = history_features(panel, rows, m, treatment_features(), m > 0 ? &paths : nullptr);
  return steps_[static_cast<std::size_t>(m)].treatment.predict_probability(d.x);
}

Eigen::VectorXd FittedPropensities::retained(const Panel& panel, std::span<const std::size_t> rows, int m,
                                             const TreatmentPaths& paths) const {
  if (m < 0 || m > horizon_) throw InvalidParameter("FittedPropensities: time index out of range");
  check_paths(rows, paths, m + 1);
  const DesignMatrix d = history_features(panel, rows, m + 1, {}, &paths);
  // The censoring model is fit on the event C_{m+1} = 1.
  return (1.0 - steps_[static_cast<std::size_t>(m)].censoring.predict_probability(d.x).array()).matrix();
}

Eigen::VectorXd OraclePropensities::treated(const Panel& panel, std::span<const std::size_t> rows, int m,
                                            const TreatmentPaths& paths) const {
  check_paths(rows, paths, m);
  Eigen::VectorXd p(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int t_prev = m == 0 ? 0 : paths(static_cast<Eigen::Index>(r), m - 1);
    p(static_cast<Eigen::Index>(r)) = true_treatment_probability(panel[rows[r]], m, t_prev);
  }
  return p;
}

Eigen::VectorXd OraclePropensities::retained(const Panel& panel, std::span<const std::size_t> rows, int m,
                                             const TreatmentPaths& paths) const {
  check_paths(rows, paths, m + 1);
  Eigen::VectorXd p(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int t = paths(static_cast<Eigen::Index>(r), m);
    p(static_cast<Eigen::Index>(r)) = 1.0 - true_censoring_probability(panel[rows[r]], m + 1, t);
  }
  return p;
}

FittedPropensities fit_propensities(const Panel& panel, PropensityMode mode, const Regime* regime) {
  if (panel.empty()) throw EstimationError("fit_propensities: empty panel");
  if (mode == PropensityMode::regime_followers && !regime)
    throw InvalidParameter("fit_propensities: follower mode needs a regime");
  const int K = panel.horizon();
  std::vector<PropensityStep> steps(static_cast<std::size_t>(K + 1));
  for (int m = 0; m <= K; ++m) {
    const std::vector<std::size_t> risk = at_risk(panel, m);
    const TreatmentPaths obs = observed_treatments(panel, risk, m);
    std::vector<std::size_t> t_rows, c_rows;
    if (mode == PropensityMode::all_uncensored) {
      t_rows = risk;
      c_rows = risk;
    } else {
      const TreatmentPaths d = regime_paths(panel, risk, *regime, m);
      for (std::size_t r = 0; r < risk.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        const bool past = m == 0 || obs.row(ri).head(m) == d.row(ri).head(m);
        if (!past) continue;
        t_rows.push_back(risk[r]);
        if (obs(ri, m) == d(ri, m)) c_rows.push_back(risk[r]);
      }
    }
    if (t_rows.empty())
      throw EstimationError("fit_propensities: empty treatment-model fitting set at m=" + std::to_string(m));
    if (c_rows.empty())
      throw EstimationError("fit_propensities: empty censoring-model fitting set at m=" + std::to_string(m));

    auto& step = steps[static_cast<std::size_t>(m)];
    {
      const DesignMatrix d = history_features(panel, t_rows, m, treatment_features());
      Eigen::VectorXd y(static_cast<Eigen::Index>(t_rows.size()));
      for (std::size_t r = 0; r < t_rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = panel[t_rows[r]].at(m).t;
      step.treatment = fit_logistic(d.x, y);
      step.treatment_rows = t_rows.size();
    }
    {
      const DesignMatrix d = history_features(panel, c_rows, m + 1);
      Eigen::VectorXd y(static_cast<Eigen::Index>(c_rows.size()));
      for (std::size_t r = 0; r < c_rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = panel[c_rows[r]].at(m + 1).c;
      step.censoring = fit_logistic(d.x, y);
      step.censoring_rows = c_rows.size();
    }
  }
  return FittedPropensities(K, std::move(steps));
}

namespace {

void apply_truncation(Eigen::VectorXd& p, const Truncation& trunc, std::size_t* hits) {
  if (!trunc.enabled) return;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double t = truncate_probability(p(i), trunc.lo, trunc.hi);
    if (t != p(i) && hits) ++*hits;
    p(i) = t;
  }
}

}  // namespace

Eigen::VectorXd Propensities::arm(const Panel& panel, std::span<const std::size_t> rows, int m,
                                  const TreatmentPaths& paths) const {
  Eigen::VectorXd p = treated(panel, rows, m, paths);
  for (Eigen::Index r = 0; r < p.size(); ++r)
    if (paths(r, m) == 0) p(r) = 1.0 - p(r);
  return p;
}

Eigen::VectorXd arm_probability(const Propensities& props, const Panel& panel, std::span<const std::size_t> rows,
                                int m, const TreatmentPaths& paths, const Truncation& trunc, std::size_t* hits) {
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(rows.size()); ++r) {
    const int t = paths(r, m);
    if (t != 0 && t != 1) throw DataIntegrityError("arm_probability: undefined treatment at m=" + std::to_string(m));
  }
  Eigen::VectorXd p = props.arm(panel, rows, m, paths);
  apply_truncation(p, trunc, hits);
  return p;
}

Eigen::VectorXd retention_probability(const Propensities& props, const Panel& panel,
                                      std::span<const std::size_t> rows, int m, const TreatmentPaths& paths,
                                      const Truncation& trunc, std::size_t* hits) {
  Eigen::VectorXd p = props.retained(panel, rows, m, paths);
  apply_truncation(p, trunc, hits);
  return p;
}

Eigen::VectorXd normalize_weights(const Eigen::VectorXd& w) {
  const double s = w.sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw EstimationError("normalize_weights: weights do not have a positive sum");
  return w / s;
}

void WeightTable::normalize() {
  if (normalized) return;
  for (auto& st : steps) {
    double s = 0.0;
    for (std::size_t r = 0; r < st.rows.size(); ++r)
      if (st.retained[r]) s += st.w(static_cast<Eigen::Index>(r));
    if (!(s > 0.0)) throw EstimationError("WeightTable::normalize: no retained rows at m=" + std::to_string(st.m));
    for (std::size_t r = 0; r < st.rows.size(); ++r)
      if (st.retained[r]) st.w(static_cast<Eigen::Index>(r)) /= s;
    st.w_md = normalize_weights(st.w_md);
  }
  normalized = true;
}

WeightTable cumulative_weights(const Panel& panel, const Propensities& props, const Regime& regime,
                               const Truncation& trunc) {
  const int K = panel.horizon();
  WeightTable table;
  // Observed-history chain for every subject, updated as m advances.
  Eigen::VectorXd chain = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(panel.size()));
  for (int m = 0; m <= K; ++m) {
    StepWeights st;
    st.m = m;
    st.rows = at_risk(panel, m);
    const Eigen::Index n = static_cast<Eigen::Index>(st.rows.size());
    const TreatmentPaths obs = observed_treatments(panel, st.rows, m);
    const TreatmentPaths md = current_step_paths(panel, st.rows, regime, m);

    st.p_treat_obs = arm_probability(props, panel, st.rows, m, obs, trunc, &table.truncation_hits);
    st.p_retain_obs = retention_probability(props, panel, st.rows, m, obs, trunc, &table.truncation_hits);

    // Modified factors are only re-evaluated where the regime departs from
    // the observed T_m, so agreeing rows carry bit-identical probabilities.
    std::vector<std::size_t> differ;
    for (Eigen::Index r = 0; r < n; ++r)
      if (md(r, m) != obs(r, m)) differ.push_back(static_cast<std::size_t>(r));
    st.p_treat_md = st.p_treat_obs;
    st.p_retain_md = st.p_retain_obs;
    if (!differ.empty()) {
      std::vector<std::size_t> sub_rows;
      for (auto r : differ) sub_rows.push_back(st.rows[r]);
      const TreatmentPaths sub = subset_paths(md, differ);
      const Eigen::VectorXd pt = arm_probability(props, panel, sub_rows, m, sub, trunc, &table.truncation_hits);
      const Eigen::VectorXd pc = retention_probability(props, panel, sub_rows, m, sub, trunc, &table.truncation_hits);
      for (std::size_t i = 0; i < differ.size(); ++i) {
        st.p_treat_md(static_cast<Eigen::Index>(differ[i])) = pt(static_cast<Eigen::Index>(i));
        st.p_retain_md(static_cast<Eigen::Index>(differ[i])) = pc(static_cast<Eigen::Index>(i));
      }
    }

    st.w.resize(n);
    st.w_md.resize(n);
    st.retained.resize(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      const std::size_t row = st.rows[static_cast<std::size_t>(r)];
      const double prior = chain(static_cast<Eigen::Index>(row));
      const double wo = prior * (1.0 / st.p_treat_obs(r)) * (1.0 / st.p_retain_obs(r));
      st.w_md(r) = prior * (1.0 / st.p_treat_md(r)) * (1.0 / st.p_retain_md(r));
      const bool kept = panel[row].uncensored_at(m + 1);
      st.retained[static_cast<std::size_t>(r)] = kept;
      st.w(r) = kept ? wo : kMissing;
      chain(static_cast<Eigen::Index>(row)) = wo;
    }
    table.steps.push_back(std::move(st));
  }
  return table;
}

void write_weights_csv(const Panel& panel, const WeightTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("write_weights_csv: cannot open " + path.string());
  out << "id,m,W,Wmd\n";
  for (const auto& st : table.steps) {
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      out << panel[st.rows[r]].id << ',' << st.m << ','
          << (st.retained[r] ? format_double(st.w(ri)) : std::string()) << ',' << format_double(st.w_md(ri)) << '\n';
    }
  }
  if (!out) throw Error("write_weights_csv: write failed for " + path.string());
}

RegimeProbabilities regime_probabilities(const Panel& panel, const Propensities& props, const Regime& regime,
                                         const Truncation& trunc) {
  const int K = panel.horizon();
  RegimeProbabilities out;
  Eigen::VectorXd chain = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(panel.size()));
  for (int m = 0; m <= K; ++m) {
    std::vector<std::size_t> rows = at_risk(panel, m);
    const TreatmentPaths d = regime_paths(panel, rows, regime, m);
    const Eigen::VectorXd pt = arm_probability(props, panel, rows, m, d, trunc, &out.truncation_hits);
    const Eigen::VectorXd pc = retention_probability(props, panel, rows, m, d, trunc, &out.truncation_hits);
    Eigen::VectorXd g(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const auto pi = static_cast<Eigen::Index>(rows[r]);
      g(ri) = chain(pi) * pt(ri) * pc(ri);
      chain(pi) = g(ri);
    }
    out.rows.push_back(std::move(rows));
    out.g.push_back(std::move(g));
  }
  return out;
}

}  // namespace dtr
