#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dtr/config.hpp"
#include "dtr/estimators.hpp"

namespace dtr {

// One configured estimator: method plus outcome learner (empty for
// iptw / msm).
struct Cell {
  Method method = Method::iptw;
  std::string learner;

  std::string label() const;  // "IPTW", "Seq-L1", "TS-DKL", ...
  bool operator==(const Cell&) const = default;
};

// iptw and msm once; seq_g and ltmle with each configured learner set;
// ts with every configured learner.
std::vector<Cell> bench_cells(const BenchConfig& config);

struct ReportRow {
  Cell cell;
  Regime regime{RegimeKind::threshold_750};
  int horizon = 0;  // K; time point K + 1
  double truth = 0.0;
  double truth_se = 0.0;
  std::vector<std::optional<double>> estimates;  // per replicate; empty on failure
  std::vector<std::string> errors;               // per replicate; empty on success
  std::optional<double> mae;
  std::optional<double> esd;                     // needs >= 2 successful replicates
  double runtime_seconds = 0.0;

  int time_point() const { return horizon + 1; }
};

struct ReportTable {
  BenchConfig config;
  std::vector<ReportRow> rows;
};

// Mean absolute error and sample standard deviation over the available
// estimates.
std::optional<double> mean_absolute_error(const std::vector<std::optional<double>>& est, double truth);
std::optional<double> empirical_sd(const std::vector<std::optional<double>>& est);

using ProgressFn = std::function<void(const std::string&)>;

ReportTable run_benchmark(const BenchConfig& config, const ProgressFn& progress = {});

}  // namespace dtr
