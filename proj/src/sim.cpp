#include "dtr/sim.hpp"

#include <cmath>

#include "dtr/error.hpp"
#include "dtr/parallel.hpp"

namespace dtr {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double treatment_logit(double l1, double l2, double l3, int k) {
  return -2.4 + 0.015 * (750.0 - l1) + 5.0 * (0.2 - l2) - 0.8 * l3 + 0.8 * k;
}

double censoring_logit(double l1, double l2, double l3, int t_prev) {
  return -6.0 + 0.01 * (750.0 - l1) + 1.0 * (0.2 - l2) - 0.65 * l3 - t_prev;
}

double censoring_probability(double l1, double l2, double l3, int t_prev) {
  return std::max(expit(censoring_logit(l1, l2, l3, t_prev)), 0.05);
}

// CD4 count drift: steep growth for k in 1..4, slower for 5..8, none after.
double l1_drift(int k) {
  const double base = std::log(k * (1034.0 - 662.0) / 8.0);
  if (k <= 4) return 13.0 * base;
  if (k <= 8) return 4.0 * base;
  return 0.0;
}

constexpr std::uint64_t kTruthSalt = 0x7472757468ULL;

// Draws one subject from the structural equations. With `intervene` set,
// censoring is prevented and treatment follows the regime.
void generate_subject(Trajectory& s, int K, Rng& rng, const TruncationTable& tb,
                      const Regime* intervene) {
  s.records.assign(static_cast<std::size_t>(K + 2), TimeRecord{});

  s.v1 = rng.bernoulli(4392.0 / 5826.0) ? 1 : 0;
  s.v2 = rng.bernoulli(s.v1 == 1 ? 2222.0 / 4392.0 : 758.0 / 1434.0) ? 1 : 0;
  s.v3 = rng.uniform(1.0, 5.0);

  auto& r0 = s.records[0];
  r0.l1 = draw_truncated_normal(s.v1 == 1 ? 650.0 : 720.0, s.v1 == 1 ? 350.0 : 400.0, tb.l1, rng);
  const double l1_tilde = (r0.l1 - 671.7468) / (10.0 * 352.2788) + 1.0;
  r0.l2 = draw_truncated_normal(0.16 + 0.05 * (r0.l1 - 650.0) / 650.0, 0.07, tb.l2, rng);
  const double l2_tilde = (r0.l2 - 0.1648594) / (10.0 * 0.06980332) + 1.0;
  r0.l3 = draw_truncated_normal((s.v1 == 1 ? -1.65 : -2.05) + 0.1 * s.v3 +
                                    0.05 * (r0.l1 - 650.0) / 650.0 +
                                    0.05 * (r0.l2 - 16.0) / 16.0,
                                1.0, tb.l3, rng);
  r0.c = 0;
  r0.y = draw_truncated_normal(
      -2.6 + 0.1 * (s.v3 > 2.0 ? 1.0 : 0.0) + 0.3 * (s.v1 == 0 ? 1.0 : 0.0) + (r0.l3 + 1.45), 1.1,
      tb.y, rng);
  if (intervene) {
    r0.t = static_cast<std::int8_t>(intervene->decide(r0.l1, r0.l2, r0.l3, 0));
  } else {
    r0.t = rng.bernoulli(expit(treatment_logit(r0.l1, r0.l2, r0.l3, 0))) ? 1 : 0;
  }

  const double l3_anchor = r0.l3 + 1.5135;
  for (int k = 1; k <= K + 1; ++k) {
    const auto& prev = s.records[static_cast<std::size_t>(k - 1)];
    auto& cur = s.records[static_cast<std::size_t>(k)];
    const int t1 = prev.t;
    const int t2 = k >= 2 ? s.records[static_cast<std::size_t>(k - 2)].t : 0;

    double mu1 = l1_drift(k) + prev.l1 + 2.0 * prev.l2 + 2.0 * prev.l3 + 2.5 * t1;
    if (k >= 9) mu1 += 2.0 * prev.l3;  // the late-period equation carries the L3 term twice
    cur.l1 = draw_truncated_normal(mu1, 50.0, tb.l1, rng);
    cur.l2 = draw_truncated_normal(
        prev.l2 + 0.0003 * (cur.l1 - prev.l1) + 0.0005 * prev.l3 + 0.0005 * t1 * l1_tilde, 0.02,
        tb.l2, rng);
    cur.l3 = draw_truncated_normal(prev.l3 + 0.0017 * (cur.l1 - prev.l1) +
                                       0.2 * (cur.l2 - prev.l2) + 0.005 * t1 * t1 * l2_tilde,
                                   0.5, tb.l3, rng);

    if (!intervene && rng.bernoulli(censoring_probability(cur.l1, cur.l2, cur.l3, t1))) {
      for (int j = k; j <= K + 1; ++j) s.records[static_cast<std::size_t>(j)].c = 1;
      return;
    }
    cur.c = 0;

    const double d1 = cur.l1 - prev.l1;
    const double d2 = cur.l2 - prev.l2;
    const double d3 = (cur.l3 - prev.l3) * l3_anchor;
    const double mu_y = prev.y + 0.00005 * d1 - 0.000001 * (d1 * d1 * l1_tilde) + 0.01 * d2 -
                        0.0001 * (d2 * d2 * l2_tilde) + 0.07 * d3 - 0.001 * d3 * d3 +
                        0.005 * t1 + 0.075 * t2 + 0.05 * t1 * t2;
    cur.y = draw_truncated_normal(mu_y, 2.5, tb.y, rng);

    if (k <= K) {
      if (intervene) {
        cur.t = static_cast<std::int8_t>(intervene->decide(cur.l1, cur.l2, cur.l3, t1));
      } else if (t1 == 1) {
        cur.t = 1;
      } else {
        cur.t = rng.bernoulli(expit(treatment_logit(cur.l1, cur.l2, cur.l3, k))) ? 1 : 0;
      }
    }
  }
}

}  // namespace

void SimSpec::validate() const {
  if (n_subjects < 1) throw InvalidParameter("n_subjects must be positive");
  if (horizon < 0) throw InvalidParameter("horizon K must be >= 0");
  for (const Replacement* r : {&bounds.l1, &bounds.l2, &bounds.l3, &bounds.y}) {
    if (!(r->a < r->b) || r->a1 > r->a2 || r->b1 > r->b2)
      throw InvalidParameter("invalid truncation/replacement bounds");
  }
}

double draw_truncated_normal(double mu, double sigma, const Replacement& r, Rng& rng) {
  if (!(sigma >= 0.0)) throw InvalidParameter("draw_truncated_normal: sigma must be >= 0");
  const double x = mu + sigma * rng.normal();
  if (x < r.a) return rng.uniform(r.a1, r.a2);
  if (x > r.b) return rng.uniform(r.b1, r.b2);
  return x;
}

std::string_view Regime::name() const {
  switch (kind_) {
    case RegimeKind::always_treat: return "always";
    case RegimeKind::threshold_750: return "750s";
    case RegimeKind::threshold_350: return "350s";
    case RegimeKind::never_treat: return "never";
  }
  return "?";
}

int Regime::decide(double l1, double l2, double l3, int t_prev) const {
  switch (kind_) {
    case RegimeKind::always_treat: return 1;
    case RegimeKind::never_treat: return 0;
    case RegimeKind::threshold_750:
      return (l1 < 750.0 || l2 < 0.25 || l3 < -2.0 || t_prev == 1) ? 1 : 0;
    case RegimeKind::threshold_350:
      return (l1 < 350.0 || l2 < 0.15 || l3 < -2.0 || t_prev == 1) ? 1 : 0;
  }
  return 0;
}

Regime Regime::parse(std::string_view name) {
  if (name == "always" || name == "always_treat") return Regime(RegimeKind::always_treat);
  if (name == "750s" || name == "threshold_750") return Regime(RegimeKind::threshold_750);
  if (name == "350s" || name == "threshold_350") return Regime(RegimeKind::threshold_350);
  if (name == "never" || name == "never_treat") return Regime(RegimeKind::never_treat);
  throw InvalidParameter("unknown regime '" + std::string(name) + "'");
}

std::array<Regime, 4> Regime::all() {
  return {Regime(RegimeKind::always_treat), Regime(RegimeKind::threshold_750),
          Regime(RegimeKind::threshold_350), Regime(RegimeKind::never_treat)};
}

int regime_decision(const Regime& regime, const Trajectory& s, int k, int t_prev) {
  const auto& r = s.at(k);
  if (is_missing(r.l1) || is_missing(r.l2) || is_missing(r.l3))
    throw DataIntegrityError("regime_decision: subject " + std::to_string(s.id) +
                             " has missing covariates at time " + std::to_string(k));
  return regime.decide(r.l1, r.l2, r.l3, t_prev);
}

TreatmentPaths regime_paths(const Panel& panel, std::span<const std::size_t> rows,
                            const Regime& regime, int through) {
  TreatmentPaths paths(static_cast<Eigen::Index>(rows.size()), through + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    int prev = 0;
    for (int j = 0; j <= through; ++j) {
      prev = regime_decision(regime, panel[rows[r]], j, prev);
      paths(static_cast<Eigen::Index>(r), j) = prev;
    }
  }
  return paths;
}

TreatmentPaths current_step_paths(const Panel& panel, std::span<const std::size_t> rows,
                                  const Regime& regime, int m) {
  TreatmentPaths paths = observed_treatments(panel, rows, m);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const int t_prev = m == 0 ? 0 : paths(ri, m - 1);
    if (t_prev == kMissingFlag)
      throw DataIntegrityError("current_step_paths: missing prior treatment");
    paths(ri, m) = regime_decision(regime, panel[rows[r]], m, t_prev);
  }
  return paths;
}

bool follows_regime(const Trajectory& s, const Regime& regime, int k) {
  if (static_cast<std::size_t>(k + 1) >= s.records.size() || !s.uncensored_at(k + 1)) return false;
  int prev = 0;
  for (int j = 0; j <= k; ++j) {
    const int d = regime_decision(regime, s, j, prev);
    if (s.at(j).t != d) return false;
    prev = d;
  }
  return true;
}

double true_treatment_probability(const Trajectory& s, int k, int t_prev) {
  if (t_prev == 1) return 1.0;
  const auto& r = s.at(k);
  return expit(treatment_logit(r.l1, r.l2, r.l3, k));
}

double true_censoring_probability(const Trajectory& s, int k, int t_prev) {
  if (k < 1) return 0.0;
  const auto& r = s.at(k);
  return censoring_probability(r.l1, r.l2, r.l3, t_prev);
}

Panel simulate_panel(const SimSpec& spec) {
  spec.validate();
  std::vector<Trajectory> subjects(static_cast<std::size_t>(spec.n_subjects));
  parallel_for(subjects.size(), [&](std::size_t i) {
    auto& s = subjects[i];
    s.id = static_cast<std::int64_t>(i) + 1;
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(s.id)));
    generate_subject(s, spec.horizon, rng, spec.bounds, nullptr);
  });
  return Panel(spec.horizon, std::move(subjects));
}

std::vector<GroundTruth> counterfactual_truths(const SimSpec& spec, const Regime& regime,
                                               std::size_t mc_samples) {
  spec.validate();
  if (mc_samples < 2) throw InvalidParameter("counterfactual_truth: mc_samples must be >= 2");
  const int K = spec.horizon;
  constexpr std::size_t kChunk = 1 << 15;
  const std::size_t n_chunks = (mc_samples + kChunk - 1) / kChunk;
  const auto width = static_cast<std::size_t>(K + 1);
  // Per chunk: shifted sums (around Y_0 scale) and sums of squares for Y_1..Y_{K+1}.
  std::vector<double> sums(n_chunks * width, 0.0), sumsq(n_chunks * width, 0.0);
  const std::uint64_t stream = kTruthSalt + static_cast<std::uint64_t>(regime.kind());

  parallel_for(n_chunks, [&](std::size_t c) {
    Trajectory s;
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(mc_samples, begin + kChunk);
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(spec.seed, i, stream));
      generate_subject(s, K, rng, spec.bounds, &regime);
      for (std::size_t k = 0; k < width; ++k) {
        const double y = s.records[k + 1].y;
        sums[c * width + k] += y;
        sumsq[c * width + k] += y * y;
      }
    }
  });

  std::vector<GroundTruth> out;
  const double n = static_cast<double>(mc_samples);
  for (std::size_t k = 0; k < width; ++k) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      sum += sums[c * width + k];
      sq += sumsq[c * width + k];
    }
    const double mean = sum / n;
    const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
    GroundTruth g;
    g.regime = regime;
    g.horizon = static_cast<int>(k);
    g.value = mean;
    g.mc_samples = mc_samples;
    g.mc_standard_error = std::sqrt(var / n);
    out.push_back(g);
  }
  return out;
}

GroundTruth counterfactual_truth(const SimSpec& spec, const Regime& regime,
                                 std::size_t mc_samples) {
  return counterfactual_truths(spec, regime, mc_samples).back();
}

}  // namespace dtr
