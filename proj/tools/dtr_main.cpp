// Command-line front end: simulate, truth, estimate, bench, report.
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtr/bench.hpp"
#include "dtr/config.hpp"
#include "dtr/error.hpp"
#include "dtr/estimators.hpp"
#include "dtr/panel.hpp"
#include "dtr/report.hpp"
#include "dtr/sim.hpp"

namespace {

using namespace dtr;

std::set<ReportFormat> parse_formats(const std::string& s) {
  std::set<ReportFormat> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "csv") out.insert(ReportFormat::csv);
    else if (item == "json") out.insert(ReportFormat::json);
    else if (item == "plotdata") out.insert(ReportFormat::plotdata);
    else if (!item.empty()) throw InvalidParameter("unknown report format '" + item + "'");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal causal-effect estimation for dynamic treatment regimes"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a panel and write it as CSV");
  int sim_n = 1000, sim_k = 11;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  sim->add_option("--n", sim_n, "Subjects")->capture_default_str();
  sim->add_option("--K", sim_k, "Horizon K (time points 0..K+1)")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
  sim->add_option("--out", sim_out, "Output CSV path")->required();

  // truth
  auto* tru = app.add_subcommand("truth", "Monte Carlo counterfactual mean of Y_{K+1}");
  std::string tru_regime;
  int tru_k = 11;
  std::size_t tru_mc = 1000000;
  std::uint64_t tru_seed = 1;
  tru->add_option("--regime", tru_regime, "always | 750s | 350s | never")->required();
  tru->add_option("--K", tru_k, "Horizon K")->capture_default_str();
  tru->add_option("--mc", tru_mc, "Monte Carlo samples")->capture_default_str();
  tru->add_option("--seed", tru_seed, "Seed")->capture_default_str();

  // estimate
  auto* est = app.add_subcommand("estimate", "Run one estimator on a panel CSV");
  std::string est_method, est_learner = "L1", est_regime, est_panel, est_props = "fitted";
  int est_k = -1;
  std::uint64_t est_seed = 1;
  std::optional<double> est_truth;
  bool est_ht = false, est_nodewise = false, est_loss_weight = false;
  est->add_option("--method", est_method, "iptw | msm | seq_g | ltmle | ts")->required();
  est->add_option("--learner", est_learner, "L1 | L2 | L3 | nn | dkl | saturated")->capture_default_str();
  est->add_option("--regime", est_regime, "always | 750s | 350s | never")->required();
  est->add_option("--panel", est_panel, "Panel CSV")->required();
  est->add_option("--K", est_k, "Target horizon (default: the panel's)");
  est->add_option("--seed", est_seed, "Seed for stochastic learners")->capture_default_str();
  est->add_option("--propensities", est_props, "fitted | oracle | unit")->capture_default_str();
  est->add_option("--truth", est_truth, "Known truth; adds abs_error to the output");
  est->add_flag("--horvitz-thompson", est_ht, "iptw: unnormalized weights");
  est->add_flag("--nodewise", est_nodewise, "seq_g: two regressions per step");
  est->add_flag("--loss-weight", est_loss_weight, "ts: weights as loss weights");

  // bench
  auto* ben = app.add_subcommand("bench", "Replicated benchmark from a config file");
  std::string ben_config, ben_set_out;
  std::vector<std::string> ben_set;
  bool ben_quiet = false;
  ben->add_option("--config", ben_config, "key = value config file");
  ben->add_option("--set", ben_set, "Override a setting, e.g. --set R=2 (repeatable)");
  ben->add_option("--out-dir", ben_set_out, "Output directory (overrides out_dir)");
  ben->add_flag("--quiet", ben_quiet, "No progress output");

  // report
  auto* rep = app.add_subcommand("report", "Re-emit tables from a saved report.json");
  std::string rep_json, rep_out, rep_formats = "csv,json,plotdata";
  rep->add_option("--json", rep_json, "Saved report.json")->required();
  rep->add_option("--out-dir", rep_out, "Output directory")->required();
  rep->add_option("--formats", rep_formats, "Comma-separated: csv,json,plotdata")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      SimSpec spec;
      spec.n_subjects = sim_n;
      spec.horizon = sim_k;
      spec.seed = sim_seed;
      write_csv(simulate_panel(spec), sim_out);
    } else if (*tru) {
      SimSpec spec;
      spec.horizon = tru_k;
      spec.seed = tru_seed;
      const GroundTruth gt = counterfactual_truth(spec, Regime::parse(tru_regime), tru_mc);
      const nlohmann::json j{{"regime", gt.regime.name()},          {"K", gt.horizon},
                             {"value", gt.value},                   {"mc_samples", gt.mc_samples},
                             {"mc_standard_error", gt.mc_standard_error}};
      std::cout << j.dump(2) << "\n";
    } else if (*est) {
      Panel panel = read_csv(est_panel);
      if (est_k >= 0) panel = truncate_horizon(panel, est_k);
      EstimatorConfig cfg;
      cfg.method = parse_method(est_method);
      cfg.learner = parse_learner(est_learner);
      cfg.regime = Regime::parse(est_regime);
      cfg.seed = est_seed;
      cfg.horvitz_thompson = est_ht;
      cfg.scheme = est_nodewise ? IceScheme::nodewise : IceScheme::single;
      cfg.ts_loss_weight = est_loss_weight;
      if (est_props == "fitted") cfg.propensities = PropensitySource::fitted;
      else if (est_props == "oracle") cfg.propensities = PropensitySource::oracle;
      else if (est_props == "unit") cfg.propensities = PropensitySource::unit;
      else throw InvalidParameter("unknown propensity source '" + est_props + "'");
      const Estimate e = estimate(panel, cfg);
      nlohmann::json j = to_json(e);
      j["truth"] = est_truth ? nlohmann::json(*est_truth) : nlohmann::json(nullptr);
      j["abs_error"] = est_truth ? nlohmann::json(std::abs(e.value - *est_truth)) : nlohmann::json(nullptr);
      std::cout << j.dump(2) << "\n";
    } else if (*ben) {
      BenchConfig cfg = ben_config.empty() ? BenchConfig{} : read_config(ben_config);
      for (const auto& s : ben_set) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InvalidParameter("--set expects key=value, got '" + s + "'");
        apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
      }
      if (!ben_set_out.empty()) cfg.out_dir = ben_set_out;
      ProgressFn progress;
      if (!ben_quiet) progress = [](const std::string& s) { std::cerr << s << "\n"; };
      const ReportTable table = run_benchmark(cfg, progress);
      emit_report(table, cfg.out_dir, {ReportFormat::csv, ReportFormat::json, ReportFormat::plotdata});
      std::cout << metric_csv(table, false);
    } else if (*rep) {
      std::ifstream in(rep_json);
      if (!in) throw Error("cannot open " + rep_json);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report JSON: ") + e.what());
      }
      emit_report(report_from_json(j), rep_out, parse_formats(rep_formats));
    }
  } catch (const InvalidParameter& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
