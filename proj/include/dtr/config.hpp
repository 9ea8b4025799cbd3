#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dtr/estimators.hpp"
#include "dtr/learner.hpp"
#include "dtr/sim.hpp"

namespace dtr {

struct BenchConfig {
  int n = 1000;
  int K = 11;
  int R = 10;
  std::uint64_t seed = 20240607;
  std::size_t mc_samples = 1000000;
  std::vector<Method> methods{Method::iptw, Method::msm, Method::seq_g, Method::ltmle, Method::ts};
  std::vector<LearnerKind> learners{LearnerKind::L1, LearnerKind::L2, LearnerKind::L3, LearnerKind::nn,
                                    LearnerKind::dkl};
  std::vector<Regime> regimes{Regime(RegimeKind::always_treat), Regime(RegimeKind::threshold_750),
                              Regime(RegimeKind::threshold_350), Regime(RegimeKind::never_treat)};
  std::vector<int> horizons{10, 11};  // K values; time point = K + 1
  std::string out_dir = "bench_out";
  unsigned workers = 0;  // 0 -> hardware concurrency

  // Throws InvalidParameter.
  void validate() const;
};

// Applies one `key = value` setting. Keys: n, K, R, seed, mc_samples,
// methods, learners, regimes, horizons, out_dir, workers. Lists are
// comma-separated.
void apply_setting(BenchConfig& config, std::string_view key, std::string_view value);

// Flat `key = value` file; '#' starts a comment. Unknown keys and malformed
// lines raise ParseError naming the line.
BenchConfig read_config(const std::filesystem::path& path, BenchConfig base = {});
BenchConfig parse_config(std::string_view text, BenchConfig base = {});

std::string to_config_text(const BenchConfig& config);

}  // namespace dtr
