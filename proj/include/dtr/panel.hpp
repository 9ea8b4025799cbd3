#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dtr {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline constexpr std::int8_t kMissingFlag = -1;

inline bool is_missing(double x) { return std::isnan(x); }

// One time point of a subject: (L1, L2, L3, C, Y, T). L is recorded at the
// time a subject is censored; Y and T are missing from that time on, and every
// later record is fully missing with C = 1.
struct TimeRecord {
  double l1 = kMissing;  // CD4 count
  double l2 = kMissing;  // CD4 fraction
  double l3 = kMissing;  // WAZ
  std::int8_t c = 0;
  double y = kMissing;  // HAZ
  std::int8_t t = kMissingFlag;

  bool operator==(const TimeRecord& o) const;
};

struct Trajectory {
  std::int64_t id = 0;
  int v1 = 0;
  int v2 = 0;
  double v3 = 0.0;
  std::vector<TimeRecord> records;  // k = 0..K+1

  bool uncensored_at(int k) const { return records[static_cast<std::size_t>(k)].c == 0; }
  const TimeRecord& at(int k) const { return records[static_cast<std::size_t>(k)]; }
  bool operator==(const Trajectory& o) const;
};

// Trajectories over k = 0..horizon+1. Immutable once built.
class Panel {
 public:
  Panel() = default;
  Panel(int horizon, std::vector<Trajectory> subjects);

  int horizon() const { return horizon_; }
  std::size_t size() const { return subjects_.size(); }
  bool empty() const { return subjects_.empty(); }
  const Trajectory& operator[](std::size_t i) const { return subjects_[i]; }
  const std::vector<Trajectory>& subjects() const { return subjects_; }

  bool operator==(const Panel& o) const = default;

 private:
  int horizon_ = 0;
  std::vector<Trajectory> subjects_;
};

// Throws DataIntegrityError on non-monotone censoring, values missing while
// uncensored, duplicate ids or ragged lengths.
void validate_panel(const Panel& panel);

// Row indices of subjects with C_k = 0.
std::vector<std::size_t> at_risk(const Panel& panel, int k);

// Per-subject treatment assignments over time; -1 where undefined.
using TreatmentPaths = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

TreatmentPaths observed_treatments(const Panel& panel, std::span<const std::size_t> rows, int through);

struct FeatureOptions {
  bool include_current_l = true;
  bool include_current_y = false;
  bool include_current_t = false;
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> column_names;
  std::vector<std::size_t> rows;  // panel row of each design row

  std::ptrdiff_t column(const std::string& name) const;
};

// Column names of the history at time index k:
//   V1 V2 V3 | L1_0 L2_0 L3_0 Y_0 T_0 | ... | L1_k L2_k L3_k [Y_k] [T_k]
// With the defaults the count is 5k + 6.
std::vector<std::string> history_columns(int k, const FeatureOptions& opts = {});

// Builds the history design for the given panel rows. When `treatments` is
// provided, row r of it replaces the observed T_j (j < cols) of rows[r].
DesignMatrix history_features(const Panel& panel, std::span<const std::size_t> rows, int k,
                              const FeatureOptions& opts = {},
                              const TreatmentPaths* treatments = nullptr);

// Convenience: rows = at_risk(panel, k).
DesignMatrix history_features(const Panel& panel, int k, const FeatureOptions& opts = {});

// Restricts a panel to horizon K (records 0..K+1).
Panel truncate_horizon(const Panel& panel, int horizon);

// CSV schema: id,time,V1,V2,V3,L1,L2,L3,C,Y,T ; empty field = missing.
void write_csv(const Panel& panel, const std::filesystem::path& path);
void write_csv(const Panel& panel, std::ostream& out);
Panel read_csv(const std::filesystem::path& path);
Panel read_csv(std::istream& in);

std::string format_double(double x);

}  // namespace dtr
