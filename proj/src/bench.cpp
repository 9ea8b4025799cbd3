#include "dtr/bench.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#include "dtr/error.hpp"
#include "dtr/parallel.hpp"

namespace dtr {

std::string Cell::label() const {
  switch (method) {
    case Method::iptw: return "IPTW";
    case Method::msm: return "MSM";
    case Method::seq_g: return "Seq-" + learner;
    case Method::ltmle: return "LTMLE-" + learner;
    case Method::ts: {
      if (learner == "nn") return "TS-NN";
      if (learner == "dkl") return "TS-DKL";
      return "TS-" + learner;
    }
  }
  return "?";
}

std::vector<Cell> bench_cells(const BenchConfig& config) {
  std::vector<Cell> cells;
  auto is_set = [](LearnerKind k) { return k == LearnerKind::L1 || k == LearnerKind::L2 || k == LearnerKind::L3; };
  for (Method m : config.methods) {
    if (!method_uses_learner(m)) {
      cells.push_back({m, ""});
      continue;
    }
    for (LearnerKind k : config.learners) {
      if (m != Method::ts && !is_set(k)) continue;
      cells.push_back({m, std::string(learner_name(k))});
    }
  }
  return cells;
}

std::optional<double> mean_absolute_error(const std::vector<std::optional<double>>& est, double truth) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& e : est) {
    if (!e) continue;
    s += std::abs(*e - truth);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::optional<double> empirical_sd(const std::vector<std::optional<double>>& est) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& e : est)
    if (e) {
      s += *e;
      ++n;
    }
  if (n < 2) return std::nullopt;
  const double mean = s / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& e : est)
    if (e) ss += (*e - mean) * (*e - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

ReportTable run_benchmark(const BenchConfig& config, const ProgressFn& progress) {
  config.validate();
  const unsigned workers = config.workers ? config.workers : default_workers();
  const std::vector<Cell> cells = bench_cells(config);
  const std::size_t nr = config.regimes.size(), nh = config.horizons.size(), nc = cells.size();
  const auto R = static_cast<std::size_t>(config.R);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  // Ground truth: one Monte Carlo pass per regime covers every horizon.
  SimSpec truth_spec;
  truth_spec.horizon = config.K;
  truth_spec.seed = derive_seed(config.seed, 0x7472757468);
  std::vector<std::vector<GroundTruth>> truths(nr);
  for (std::size_t ri = 0; ri < nr; ++ri) {
    truths[ri] = counterfactual_truths(truth_spec, config.regimes[ri], config.mc_samples);
    say("truth " + std::string(config.regimes[ri].name()) + " done");
  }

  // Rows in (cell, regime, horizon) order.
  ReportTable table;
  table.config = config;
  auto row_index = [&](std::size_t c, std::size_t ri, std::size_t hi) { return (c * nr + ri) * nh + hi; };
  table.rows.resize(nc * nr * nh);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t ri = 0; ri < nr; ++ri)
      for (std::size_t hi = 0; hi < nh; ++hi) {
        ReportRow& row = table.rows[row_index(c, ri, hi)];
        row.cell = cells[c];
        row.regime = config.regimes[ri];
        row.horizon = config.horizons[hi];
        const GroundTruth& gt = truths[ri][static_cast<std::size_t>(row.horizon)];
        row.truth = gt.value;
        row.truth_se = gt.mc_standard_error;
        row.estimates.assign(R, std::nullopt);
        row.errors.assign(R, "");
      }

  std::vector<std::vector<Panel>> panels(R);
  parallel_for(R, [&](std::size_t r) {
    SimSpec spec;
    spec.n_subjects = config.n;
    spec.horizon = config.K;
    spec.seed = derive_seed(config.seed, r + 1, 0x70616e656c);
    const Panel full = simulate_panel(spec);
    for (int h : config.horizons) panels[r].push_back(truncate_horizon(full, h));
  }, workers);
  say("simulated " + std::to_string(R) + " panels");

  struct Task {
    std::size_t r, c, ri, hi;  // ri unused (all regimes) for msm
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t hi = 0; hi < nh; ++hi)
      for (std::size_t c = 0; c < nc; ++c) {
        if (cells[c].method == Method::msm) {
          tasks.push_back({r, c, 0, hi});
        } else {
          for (std::size_t ri = 0; ri < nr; ++ri) tasks.push_back({r, c, ri, hi});
        }
      }

  std::vector<double> seconds(tasks.size(), 0.0);
  std::mutex progress_mutex;
  std::size_t done = 0;
  parallel_for(tasks.size(), [&](std::size_t t) {
    const Task& task = tasks[t];
    const Cell& cell = cells[task.c];
    const Panel& panel = panels[task.r][task.hi];
    EstimatorConfig ec;
    ec.method = cell.method;
    if (!cell.learner.empty()) ec.learner = parse_learner(cell.learner);
    ec.seed = derive_seed(derive_seed(config.seed, task.r + 1, static_cast<std::uint64_t>(config.horizons[task.hi])),
                          task.c + 1, task.ri + 1);
    const auto start = std::chrono::steady_clock::now();
    if (cell.method == Method::msm) {
      // The working model always pools the four regimes' follower sets.
      const auto family = Regime::all();
      try {
        const auto ests = estimate_msm(panel, std::vector<Regime>(family.begin(), family.end()), ec);
        for (std::size_t ri = 0; ri < nr; ++ri)
          for (const auto& e : ests)
            if (e.regime == config.regimes[ri]) table.rows[row_index(task.c, ri, task.hi)].estimates[task.r] = e.value;
      } catch (const std::exception& e) {
        for (std::size_t ri = 0; ri < nr; ++ri) table.rows[row_index(task.c, ri, task.hi)].errors[task.r] = e.what();
      }
    } else {
      ec.regime = config.regimes[task.ri];
      ReportRow& row = table.rows[row_index(task.c, task.ri, task.hi)];
      try {
        row.estimates[task.r] = estimate(panel, ec).value;
      } catch (const std::exception& e) {
        row.errors[task.r] = e.what();
      }
    }
    seconds[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) {
      std::lock_guard lock(progress_mutex);
      ++done;
      progress("[" + std::to_string(done) + "/" + std::to_string(tasks.size()) + "] rep " +
               std::to_string(task.r + 1) + " K=" + std::to_string(config.horizons[task.hi]) + " " + cell.label() +
               (cell.method == Method::msm ? "" : " " + std::string(config.regimes[task.ri].name())) + " " +
               std::to_string(seconds[t]) + "s");
    }
  }, workers);

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    if (cells[task.c].method == Method::msm) {
      // Shared fit: split its time evenly over the reported regimes.
      for (std::size_t ri = 0; ri < nr; ++ri)
        table.rows[row_index(task.c, ri, task.hi)].runtime_seconds += seconds[t] / static_cast<double>(nr);
    } else {
      table.rows[row_index(task.c, task.ri, task.hi)].runtime_seconds += seconds[t];
    }
  }
  for (auto& row : table.rows) {
    row.mae = mean_absolute_error(row.estimates, row.truth);
    row.esd = empirical_sd(row.estimates);
  }
  return table;
}

}  // namespace dtr
