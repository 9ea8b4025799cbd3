#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "dtr/bench.hpp"
#include "dtr/config.hpp"
#include "dtr/error.hpp"
#include "dtr/report.hpp"

using namespace dtr;

namespace {

BenchConfig tiny() {
  BenchConfig c;
  c.n = 200;
  c.K = 2;
  c.R = 2;
  c.seed = 5;
  c.mc_samples = 2000;
  c.methods = {Method::iptw, Method::msm, Method::seq_g, Method::ts};
  c.learners = {LearnerKind::L1};
  c.regimes = {Regime(RegimeKind::threshold_750), Regime(RegimeKind::never_treat)};
  c.horizons = {1, 2};
  c.workers = 1;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const BenchConfig c = parse_config(
      "# tiny run\n"
      "n = 300\n"
      "R=4\n"
      "methods = iptw, ts\n"
      "learners = L1,dkl\n"
      "regimes = 750s,never\n"
      "horizons = 3\n"
      "\n"
      "seed = 9  # trailing comment\n");
  CHECK(c.n == 300);
  CHECK(c.R == 4);
  CHECK(c.seed == 9);
  CHECK(c.methods == std::vector<Method>{Method::iptw, Method::ts});
  CHECK(c.learners == std::vector<LearnerKind>{LearnerKind::L1, LearnerKind::dkl});
  CHECK(c.regimes == std::vector<Regime>{Regime(RegimeKind::threshold_750), Regime(RegimeKind::never_treat)});
  CHECK(c.horizons == std::vector<int>{3});
  CHECK(c.K == 11);  // untouched default

  const BenchConfig back = parse_config(to_config_text(c));
  CHECK(back.n == c.n);
  CHECK(back.methods == c.methods);
  CHECK(back.regimes == c.regimes);
}

TEST_CASE("config errors") {
  try {
    parse_config("n = 10\nbogus = 3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ParseError);
  CHECK_THROWS(parse_config("n = ten\n"));
  CHECK_THROWS(parse_config("methods = iptw,unknown\n"));
  BenchConfig c;
  c.R = 0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = BenchConfig{};
  c.horizons = {12};
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  CHECK_THROWS(read_config("/nonexistent/bench.cfg"));
}

TEST_CASE("metrics") {
  const std::vector<std::optional<double>> e{1.0, 3.0};
  CHECK(*mean_absolute_error(e, 2.0) == 1.0);
  CHECK(*empirical_sd(e) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(*mean_absolute_error({1.5}, 2.0) == 0.5);
  CHECK_FALSE(empirical_sd({1.5}).has_value());
  const std::vector<std::optional<double>> gap{1.0, std::nullopt, 3.0};
  CHECK(*mean_absolute_error(gap, 2.0) == 1.0);
  CHECK(*empirical_sd(gap) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_FALSE(mean_absolute_error({std::nullopt}, 0.0).has_value());
}

TEST_CASE("cells and labels") {
  BenchConfig c = tiny();
  c.methods = {Method::iptw, Method::msm, Method::seq_g, Method::ltmle, Method::ts};
  c.learners = {LearnerKind::L1, LearnerKind::L2, LearnerKind::nn, LearnerKind::dkl};
  std::vector<std::string> labels;
  for (const Cell& cell : bench_cells(c)) labels.push_back(cell.label());
  const std::vector<std::string> expected{"IPTW",     "MSM",      "Seq-L1", "Seq-L2", "LTMLE-L1",
                                          "LTMLE-L2", "TS-L1",    "TS-L2",  "TS-NN",  "TS-DKL"};
  CHECK(labels == expected);
}

TEST_CASE("benchmark is deterministic and reports round trip") {
  const BenchConfig c = tiny();
  const ReportTable a = run_benchmark(c);
  const ReportTable b = run_benchmark(c);
  // 2 horizons x (IPTW, Seq-L1, TS-L1) x 2 regimes + MSM per horizon and regime.
  REQUIRE(a.rows.size() == b.rows.size());
  REQUIRE(a.rows.size() == 16);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].estimates == b.rows[i].estimates);
    CHECK(a.rows[i].truth == b.rows[i].truth);
    CHECK(a.rows[i].estimates.size() == 2);
    CHECK(a.rows[i].mae.has_value());
    CHECK(a.rows[i].esd.has_value());
  }

  const ReportTable back = report_from_json(nlohmann::json::parse(to_json(a).dump()));
  REQUIRE(back.rows.size() == a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(back.rows[i].cell == a.rows[i].cell);
    CHECK(back.rows[i].regime == a.rows[i].regime);
    CHECK(back.rows[i].horizon == a.rows[i].horizon);
    CHECK(back.rows[i].estimates == a.rows[i].estimates);
    CHECK(back.rows[i].mae == a.rows[i].mae);
  }
  CHECK(metric_csv(back, false) == metric_csv(a, false));
  CHECK(plotdata_csv(back) == plotdata_csv(a));

  const auto dir = std::filesystem::temp_directory_path() / "dtr_harness_test";
  std::filesystem::remove_all(dir);
  emit_report(a, dir, {ReportFormat::csv, ReportFormat::json, ReportFormat::plotdata});
  for (const char* f : {"mae.csv", "esd.csv", "report.json", "plotdata.csv"}) CHECK(std::filesystem::exists(dir / f));
  const std::string mae = slurp(dir / "mae.csv");
  CHECK(mae.find("IPTW") != std::string::npos);
  CHECK(mae.find("750s") != std::string::npos);
  CHECK(slurp(dir / "plotdata.csv").rfind("estimator,regime,time_point,metric,value\n", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("single replicate leaves the spread undefined") {
  BenchConfig c = tiny();
  c.R = 1;
  c.methods = {Method::iptw};
  c.horizons = {1};
  const ReportTable t = run_benchmark(c);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].mae.has_value());
  CHECK_FALSE(t.rows[0].esd.has_value());
  CHECK(metric_csv(t, true).find("NA") != std::string::npos);
}
