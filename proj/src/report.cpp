#include "dtr/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "dtr/error.hpp"

namespace dtr {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string na_or(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

nlohmann::json to_json(const Estimate& e) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : e.diagnostics.steps) {
    nlohmann::json js{{"m", s.m},
                      {"fit_rows", s.fit_rows},
                      {"predict_rows", s.predict_rows},
                      {"chosen", s.chosen},
                      {"mean_prediction", s.mean_q}};
    if (e.method == Method::ltmle) {
      js["followers"] = s.followers;
      js["epsilon"] = s.epsilon;
      js["fluctuation_skipped"] = s.fluctuation_skipped;
    }
    if (s.mean_variance) js["mean_predictive_variance"] = *s.mean_variance;
    if (s.min_raw_variance) js["min_raw_variance"] = *s.min_raw_variance;
    steps.push_back(std::move(js));
  }
  const auto& d = e.diagnostics;
  nlohmann::json diag{{"steps", steps},
                      {"truncation_hits", d.truncation_hits},
                      {"separated_treatment_models", d.separated_treatment_models},
                      {"separated_censoring_models", d.separated_censoring_models}};
  if (e.method == Method::iptw || e.method == Method::msm) diag["followers"] = d.followers;
  if (d.scaled_value) diag["scaled_value"] = *d.scaled_value;
  if (d.msm_theta0) diag["msm_theta"] = {*d.msm_theta0, *d.msm_theta1};
  if (!d.final_variances.empty()) diag["predictive_variances"] = d.final_variances;
  return {{"method", method_name(e.method)},
          {"learner", e.learner.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.learner)},
          {"regime", e.regime.name()},
          {"K", e.horizon},
          {"value", e.value},
          {"diagnostics", diag}};
}

nlohmann::json to_json(const ReportTable& t) {
  const BenchConfig& c = t.config;
  nlohmann::json cfg{{"n", c.n}, {"K", c.K}, {"R", c.R}, {"seed", c.seed}, {"mc_samples", c.mc_samples},
                     {"out_dir", c.out_dir}, {"horizons", c.horizons}};
  for (Method m : c.methods) cfg["methods"].push_back(method_name(m));
  for (LearnerKind k : c.learners) cfg["learners"].push_back(learner_name(k));
  for (const Regime& r : c.regimes) cfg["regimes"].push_back(r.name());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json est = nlohmann::json::array();
    for (const auto& e : r.estimates) est.push_back(opt(e));
    rows.push_back({{"estimator", r.cell.label()},
                    {"method", method_name(r.cell.method)},
                    {"learner", r.cell.learner.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.cell.learner)},
                    {"regime", r.regime.name()},
                    {"K", r.horizon},
                    {"time_point", r.time_point()},
                    {"truth", r.truth},
                    {"truth_se", r.truth_se},
                    {"estimates", est},
                    {"errors", r.errors},
                    {"mae", opt(r.mae)},
                    {"esd", opt(r.esd)},
                    {"runtime_seconds", r.runtime_seconds}});
  }
  return {{"config", cfg}, {"rows", rows}};
}

ReportTable report_from_json(const nlohmann::json& j) {
  try {
    ReportTable t;
    const auto& c = j.at("config");
    t.config.n = c.at("n").get<int>();
    t.config.K = c.at("K").get<int>();
    t.config.R = c.at("R").get<int>();
    t.config.seed = c.at("seed").get<std::uint64_t>();
    t.config.mc_samples = c.at("mc_samples").get<std::size_t>();
    t.config.out_dir = c.at("out_dir").get<std::string>();
    t.config.horizons = c.at("horizons").get<std::vector<int>>();
    t.config.methods.clear();
    for (const auto& m : c.at("methods")) t.config.methods.push_back(parse_method(m.get<std::string>()));
    t.config.learners.clear();
    for (const auto& k : c.at("learners")) t.config.learners.push_back(parse_learner(k.get<std::string>()));
    t.config.regimes.clear();
    for (const auto& r : c.at("regimes")) t.config.regimes.push_back(Regime::parse(r.get<std::string>()));
    for (const auto& jr : j.at("rows")) {
      ReportRow r;
      r.cell.method = parse_method(jr.at("method").get<std::string>());
      if (!jr.at("learner").is_null()) r.cell.learner = jr.at("learner").get<std::string>();
      r.regime = Regime::parse(jr.at("regime").get<std::string>());
      r.horizon = jr.at("K").get<int>();
      r.truth = jr.at("truth").get<double>();
      r.truth_se = jr.at("truth_se").get<double>();
      for (const auto& e : jr.at("estimates")) r.estimates.push_back(opt_from(e));
      r.errors = jr.at("errors").get<std::vector<std::string>>();
      r.mae = opt_from(jr.at("mae"));
      r.esd = opt_from(jr.at("esd"));
      r.runtime_seconds = jr.at("runtime_seconds").get<double>();
      t.rows.push_back(std::move(r));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  }
}

std::string metric_csv(const ReportTable& t, bool esd) {
  // Columns: time points ascending, regimes in configured order.
  std::vector<std::pair<int, std::string>> cols;
  std::vector<std::string> labels;
  std::map<std::pair<std::string, std::pair<int, std::string>>, std::optional<double>> cell;
  for (const auto& r : t.rows) {
    const std::pair<int, std::string> col{r.time_point(), std::string(r.regime.name())};
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    const std::string label = r.cell.label();
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
    cell[{label, col}] = esd ? r.esd : r.mae;
  }
  std::stable_sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::ostringstream out;
  out << "estimator";
  for (const auto& c : cols) out << ',' << c.second << '@' << c.first;
  out << '\n';
  for (const auto& l : labels) {
    out << l;
    for (const auto& c : cols) {
      const auto it = cell.find({l, c});
      out << ',' << (it == cell.end() ? "NA" : na_or(it->second));
    }
    out << '\n';
  }
  return out.str();
}

std::string plotdata_csv(const ReportTable& t) {
  std::ostringstream out;
  out << "estimator,regime,time_point,metric,value\n";
  for (const auto& r : t.rows) {
    out << r.cell.label() << ',' << r.regime.name() << ',' << r.time_point() << ",mae," << na_or(r.mae) << '\n';
    out << r.cell.label() << ',' << r.regime.name() << ',' << r.time_point() << ",esd," << na_or(r.esd) << '\n';
  }
  return out.str();
}

void emit_report(const ReportTable& t, const std::filesystem::path& dir, const std::set<ReportFormat>& formats) {
  if (formats.empty()) return;
  if (t.rows.empty()) throw InvalidParameter("emit_report: empty table");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  if (formats.contains(ReportFormat::csv)) {
    write_file(dir / "mae.csv", metric_csv(t, false));
    write_file(dir / "esd.csv", metric_csv(t, true));
  }
  if (formats.contains(ReportFormat::json)) write_file(dir / "report.json", to_json(t).dump(2) + "\n");
  if (formats.contains(ReportFormat::plotdata)) write_file(dir / "plotdata.csv", plotdata_csv(t));
}

}  // namespace dtr
